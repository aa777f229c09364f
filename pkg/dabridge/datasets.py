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
"""Synthetic paired datasets and the DABT tensor file."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Iterator
from typing import List
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter

from .approximator import PairedSample
from .const import MAX_SIDE
from .const import MIN_SIDE
from .const import PADDING_WRAP
from .const import PADDINGS
from .const import STREAM_DATA
from .const import TASK_BLUR
from .const import TASK_GAUSSIAN
from .const import TASK_TWOMOONS
from .const import TASKS
from .const import TWOMOONS_SCALE
from .const import TWOMOONS_SHIFT
from .exceptions import ConfigError
from .exceptions import DomainError
from .exceptions import FormatError
from .exceptions import ShapeError
from .formats import decode_tensor_block
from .formats import encode_tensor_block
from .formats import write_bytes
from .util import stream

_LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class PairedDataset:
    """Stacked (x0, y) pairs of one task."""

    x0: np.ndarray
    y: np.ndarray
    name: str
    generator_seed: Optional[int] = None

    def __post_init__(self) -> None:
        """Stack to float64 (count, dim) and check the invariants."""
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        if self.x0.shape != self.y.shape:
            raise ShapeError(f"x0 {self.x0.shape} and y {self.y.shape} differ")
        if self.x0.shape[0] < 1:
            raise DomainError("a dataset needs at least one pair")
        if not (np.all(np.isfinite(self.x0)) and np.all(np.isfinite(self.y))):
            raise DomainError(f"dataset {self.name} has non-finite entries")

    def __len__(self) -> int:
        """Return the number of pairs."""
        return int(self.x0.shape[0])

    def __getitem__(self, index: int) -> PairedSample:
        """Return one pair."""
        return PairedSample(self.x0[index], self.y[index])

    def __iter__(self) -> Iterator[PairedSample]:
        """Iterate over the pairs in file order."""
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        """Return the data dimension."""
        return int(self.x0.shape[1])

    @property
    def samples(self) -> List[PairedSample]:
        """Return the pairs as a list."""
        return list(self)

    def subset(self, indices) -> "PairedDataset":
        """Return the selected pairs."""
        idx = np.asarray(indices, dtype=np.int64)
        return PairedDataset(self.x0[idx], self.y[idx], self.name, self.generator_seed)


def _data_stream(seed: int, task: str, part: int) -> np.random.Generator:
    return stream(seed, STREAM_DATA, TASKS.index(task), part)


def gen_gaussian_pairs(
    n: int,
    dim: int,
    mu0: float | np.ndarray,
    sigma0: float | np.ndarray,
    offset: float | np.ndarray,
    seed: int,
    part: int = 0,
) -> PairedDataset:
    """
    Draw x0 ~ N(mu0, sigma0^2 I) and pair it with y = x0 + offset.

    part selects an independent split of the same seed (0 = train,
    1 = held out).
    """
    if np.any(np.asarray(sigma0) <= 0):
        raise DomainError(f"sigma0 must be positive, got {sigma0}")
    if n < 1 or dim < 1:
        raise DomainError(f"n and dim must be positive, got n={n} dim={dim}")
    rng = _data_stream(seed, TASK_GAUSSIAN, part)
    x0 = np.asarray(mu0, dtype=np.float64) + np.asarray(
        sigma0, dtype=np.float64
    ) * rng.standard_normal((n, dim))
    y = x0 + np.asarray(offset, dtype=np.float64)
    return PairedDataset(x0, y, TASK_GAUSSIAN, seed)


def twomoons_forward(x0: np.ndarray) -> np.ndarray:
    """Squash two-moons points toward the origin."""
    return TWOMOONS_SCALE * np.asarray(x0, dtype=np.float64) + np.asarray(TWOMOONS_SHIFT)


def twomoons_inverse(y: np.ndarray) -> np.ndarray:
    """Undo twomoons_forward."""
    return (np.asarray(y, dtype=np.float64) - np.asarray(TWOMOONS_SHIFT)) / TWOMOONS_SCALE


def gen_twomoons_pairs(n: int, noise_std: float, seed: int, part: int = 0) -> PairedDataset:
    """
    Two interleaved half circles.

    The upper arc has radius 1 around (0, 0); the lower arc has radius 1
    around (1, 0.5). Points alternate between the arcs.
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if noise_std < 0:
        raise DomainError(f"noise_std must be non-negative, got {noise_std}")
    rng = _data_stream(seed, TASK_TWOMOONS, part)
    theta = rng.uniform(0.0, np.pi, size=n)
    lower = np.arange(n) % 2 == 1
    x0 = np.empty((n, 2), dtype=np.float64)
    x0[:, 0] = np.where(lower, 1.0 - np.cos(theta), np.cos(theta))
    x0[:, 1] = np.where(lower, 0.5 - np.sin(theta), np.sin(theta))
    if noise_std > 0:
        x0 = x0 + noise_std * rng.standard_normal((n, 2))
    return PairedDataset(x0, twomoons_forward(x0), TASK_TWOMOONS, seed)


def box_blur(image: np.ndarray, radius: int, padding: str = PADDING_WRAP) -> np.ndarray:
    """Mean filter over a (2 radius + 1) square."""
    if radius < 0:
        raise DomainError(f"blur_radius must be non-negative, got {radius}")
    if padding not in PADDINGS:
        raise ConfigError({"padding": "unknown_padding"})
    if radius == 0:
        return np.array(image, dtype=np.float64)
    return uniform_filter(
        np.asarray(image, dtype=np.float64), size=2 * radius + 1, mode=padding
    )


def _patch(rng: np.random.Generator, side: int) -> np.ndarray:
    """Piecewise-constant patch: a background plus 2 to 4 rectangles."""
    img = np.full((side, side), rng.uniform(0.0, 1.0))
    for _ in range(int(rng.integers(2, 5))):
        r0, r1 = np.sort(rng.integers(0, side + 1, size=2))
        c0, c1 = np.sort(rng.integers(0, side + 1, size=2))
        # at least one pixel
        r1 = max(r1, r0 + 1)
        c1 = max(c1, c0 + 1)
        img[r0:r1, c0:c1] = rng.uniform(0.0, 1.0)
    return img


def gen_blur_pairs(
    n: int,
    side: int,
    blur_radius: int,
    seed: int,
    padding: str = PADDING_WRAP,
    part: int = 0,
) -> PairedDataset:
    """Sharp patches x0 and their box-blurred y, both flattened row-major."""
    if not MIN_SIDE <= side <= MAX_SIDE:
        raise ConfigError({"side": "bad_side"})
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    rng = _data_stream(seed, TASK_BLUR, part)
    x0 = np.empty((n, side * side), dtype=np.float64)
    y = np.empty_like(x0)
    for i in range(n):
        img = _patch(rng, side)
        x0[i] = img.ravel()
        y[i] = box_blur(img, blur_radius, padding).ravel()
    return PairedDataset(x0, y, TASK_BLUR, seed)


def encode_dataset(dataset: PairedDataset) -> bytes:
    """Encode as DABT: header, then an x0 row and a y row per pair."""
    rows = np.concatenate([dataset.x0, dataset.y], axis=1)
    return encode_tensor_block(rows, per_item=2)


def decode_dataset(data: bytes, name: str) -> PairedDataset:
    """Decode DABT bytes."""
    rows = decode_tensor_block(data, per_item=2)
    if rows.shape[0] < 1:
        raise FormatError("dataset holds no pairs", 8)
    dim = rows.shape[1] // 2
    return PairedDataset(rows[:, :dim], rows[:, dim:], name)


def save_dataset(path: str | Path, dataset: PairedDataset) -> Path:
    """Write the dataset to path."""
    path = write_bytes(path, encode_dataset(dataset))
    _LOGGER.info("Wrote %d %s pairs of dim %d to %s", len(dataset), dataset.name, dataset.dim, path)
    return path


def load_dataset(path: str | Path) -> PairedDataset:
    """Read a DABT file; the dataset is named after the file stem."""
    path = Path(path)
    return decode_dataset(path.read_bytes(), path.stem)


def export_csv(path: str | Path, dataset: PairedDataset) -> Path:
    """Write x0 and y columns for plotting elsewhere."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"x0_{i}" for i in range(dataset.dim)] + [f"y_{i}" for i in range(dataset.dim)]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for x0, y in zip(dataset.x0, dataset.y):
            writer.writerow([f"{v:.6g}" for v in np.concatenate([x0, y])])
    return path
