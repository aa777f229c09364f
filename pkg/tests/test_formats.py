# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Test the little-endian codecs."""

import numpy as np
import pytest

from dabridge.exceptions import FormatError
from dabridge.formats import ByteReader
from dabridge.formats import decode_tensor_block
from dabridge.formats import encode_tensor_block
from dabridge.formats import pack_floats
from dabridge.formats import pack_u32
from dabridge.formats import write_bytes


def test_pack_is_little_endian():
    assert pack_u32(1, 258) == b"\x01\x00\x00\x00\x02\x01\x00\x00"
    assert pack_floats(np.array([1.0])) == b"\x00\x00\x00\x00\x00\x00\xf0\x3f"


def test_byte_reader():
    reader = ByteReader(pack_u32(7) + pack_floats(np.array([0.5, 2.0])))
    assert reader.u32("count") == 7
    assert reader.offset == 4
    np.testing.assert_array_equal(reader.floats(2, "values"), [0.5, 2.0])
    reader.expect_end()


def test_byte_reader_truncation_offset():
    reader = ByteReader(b"\x01\x00\x00\x00\x02")
    reader.u32("first")
    with pytest.raises(FormatError) as err:
        reader.u32("second")
    assert err.value.offset == 4
    assert "second" in str(err.value)


def test_tensor_block():
    rows = np.arange(12, dtype=float).reshape(3, 4)
    raw = encode_tensor_block(rows)
    assert raw[:4] == b"DABT"
    assert len(raw) == 16 + 12 * 8
    np.testing.assert_array_equal(decode_tensor_block(raw), rows)
    np.testing.assert_array_equal(decode_tensor_block(encode_tensor_block(rows, 2), 2), rows)


def test_write_bytes_creates_parents(tmp_path):
    path = write_bytes(tmp_path / "a" / "b" / "c.bin", b"xyz")
    assert path.read_bytes() == b"xyz"
