# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2024 dabridge contributors
##############################################################################
# COPYRIGHT 2024 dabridge contributors
#
# All rights reserved. This program and the accompanying materials
# are made available under the terms of the Apache 2.0 License
# which accompanies this distribution, and is available at
# https://www.apache.org/licenses/LICENSE-2.0
##############################################################################
"""dabridge utils."""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Iterable
from typing import Tuple
import uuid
import zlib

import numpy as np

from .const import DEFAULT_THREADS
from .const import ENV_THREADS
from .const import NAME
from .exceptions import DomainError
from .exceptions import ShapeError

_LOGGER = logging.getLogger(__name__)


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """
    Return the named counter-based substream of a master seed.

    Streams are Philox generators keyed by (seed, crc32(name), *index), so
    "data", "init", "train" and "sample" draws never overlap and a stream can
    be recreated from its coordinates alone.
    """
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    spawn_key: Tuple[int, ...] = (zlib.crc32(name.encode("utf-8")),) + tuple(
        int(i) for i in index
    )
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def as_vector(value: Any, name: str = "value") -> np.ndarray:
    """Return value as a float64 array with at least one dimension."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def check_same_shape(**arrays: np.ndarray) -> None:
    """Raise ShapeError unless every array has the same trailing dimension."""
    dims = {k: np.shape(v)[-1] for k, v in arrays.items()}
    if len(set(dims.values())) > 1:
        details = ", ".join(f"{k}={v}" for k, v in dims.items())
        raise ShapeError(f"dimension mismatch: {details}")


def gen_run_id(*parts: Any) -> str:
    """Generate a stable run id from the resolved configuration values."""
    text = " ".join(str(p) for p in parts)
    m = hashlib.md5(f"{NAME} {text}".encode("utf-8"))
    return str(uuid.UUID(m.hexdigest()))


def file_digest(path: str | Path) -> str:
    """Return the sha256 hex digest of a file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def thread_count() -> int:
    """Read the worker cap from the environment."""
    raw = os.environ.get(ENV_THREADS)
    if not raw:
        return DEFAULT_THREADS
    try:
        value = int(raw)
    except ValueError:
        _LOGGER.error("%s=%s is not an integer, using %d", ENV_THREADS, raw, 1)
        return DEFAULT_THREADS
    return max(1, value)


def format_value(value: Any) -> str:
    """Format a manifest value; floats keep full precision."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_manifest(path: str | Path, items: Dict[str, Any]) -> Path:
    """Write a sorted key=value manifest capturing resolved config and seeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={format_value(items[k])}" for k in sorted(items)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _LOGGER.debug("Wrote manifest %s", path)
    return path


def read_manifest(path: str | Path) -> Dict[str, str]:
    """Read a key=value manifest back as strings."""
    items: Dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, value = line.partition("=")
        items[key.strip()] = value.strip()
    return items


def ensure_dirs(base: str | Path, names: Iterable[str]) -> Dict[str, Path]:
    """Create the fixed output layout under base."""
    base = Path(base)
    dirs = {}
    for name in names:
        dirs[name] = base / name
        dirs[name].mkdir(parents=True, exist_ok=True)
    return dirs
