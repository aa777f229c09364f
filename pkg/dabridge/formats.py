# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""
Portable little-endian binary codecs.

Dataset files (DABT) and checkpoints (DABR) share the same conventions:
4 magic bytes, u32 version, then fixed-width little-endian fields and
float64 payloads with no padding.
"""

from __future__ import annotations

import logging
from pathlib import Path
import struct
from typing import Tuple

import numpy as np

from .const import DATASET_MAGIC
from .const import DATASET_VERSION
from .exceptions import FormatError

_LOGGER = logging.getLogger(__name__)

F64 = np.dtype("<f8")


class ByteReader:
    """Sequential reader that reports the byte offset of any failure."""

    def __init__(self, data: bytes) -> None:
        """Wrap the raw file contents."""
        self._data = data
        self._offset = 0

    @property
    def offset(self) -> int:
        """Return the current position."""
        return self._offset

    @property
    def remaining(self) -> int:
        """Return the number of unread bytes."""
        return len(self._data) - self._offset

    def take(self, size: int, what: str) -> bytes:
        """Return the next size bytes or raise FormatError."""
        if size > self.remaining:
            raise FormatError(
                f"truncated file: {what} needs {size} bytes, {self.remaining} left",
                self._offset,
            )
        chunk = self._data[self._offset : self._offset + size]
        self._offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        """Unpack a little-endian struct."""
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def u32(self, what: str) -> int:
        """Read one unsigned 32-bit integer."""
        return int(self.unpack("I", what)[0])

    def floats(self, count: int, what: str) -> np.ndarray:
        """Read count float64 values."""
        raw = self.take(count * F64.itemsize, what)
        return np.frombuffer(raw, dtype=F64).astype(np.float64)

    def expect_magic(self, magic: bytes) -> None:
        """Check the leading magic bytes."""
        found = self.take(len(magic), "magic")
        if found != magic:
            raise FormatError(f"bad magic {found!r}, expected {magic!r}", 0)

    def expect_version(self, version: int) -> None:
        """Check the version field."""
        start = self._offset
        found = self.u32("version")
        if found != version:
            raise FormatError(f"unsupported version {found}, expected {version}", start)

    def expect_end(self) -> None:
        """Refuse trailing bytes."""
        if self.remaining:
            raise FormatError(f"{self.remaining} trailing bytes", self._offset)


def pack_u32(*values: int) -> bytes:
    """Pack unsigned 32-bit integers."""
    return struct.pack("<" + "I" * len(values), *values)


def pack_floats(values: np.ndarray) -> bytes:
    """Pack float64 values in flat C order."""
    return np.ascontiguousarray(values, dtype=F64).tobytes(order="C")


def encode_tensor_block(rows: np.ndarray, per_item: int = 1) -> bytes:
    """
    Encode a (count, per_item * dim) float block with the DABT header.

    Datasets use per_item = 2 (x0 row then y row), trajectory dumps use 1.
    """
    rows = np.asarray(rows, dtype=np.float64)
    count = rows.shape[0]
    dim = rows.shape[1] // per_item
    return DATASET_MAGIC + pack_u32(DATASET_VERSION, count, dim) + pack_floats(rows)


def decode_tensor_block(data: bytes, per_item: int = 1) -> np.ndarray:
    """Decode a DABT block into a (count, per_item * dim) array."""
    reader = ByteReader(data)
    reader.expect_magic(DATASET_MAGIC)
    reader.expect_version(DATASET_VERSION)
    count = reader.u32("count")
    dim = reader.u32("dim")
    values = reader.floats(count * per_item * dim, "payload")
    reader.expect_end()
    return values.reshape(count, per_item * dim)


def write_bytes(path: str | Path, data: bytes) -> Path:
    """Write a binary file, creating parent folders."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    _LOGGER.debug("Wrote %d bytes to %s", len(data), path)
    return path
