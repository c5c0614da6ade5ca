import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spnet.exceptions import BadMagic, EmptyShape, IoFailure, ShapeMismatch, TruncatedPayload, UnknownDtype
from spnet.tensor import (
    as_f64,
    load_tensor,
    save_tensor,
    seq_sum,
    tensor_create,
    tensor_read,
    tensor_to_bytes,
    tensor_write,
)


def test_create_row_major():
    t = tensor_create([2, 2], "f32", [1, 2, 3, 4])
    assert t[1, 0] == 3
    assert t.dtype == np.float32
    assert not t.flags.writeable


def test_create_length_mismatch():
    with pytest.raises(ShapeMismatch):
        tensor_create([3], "f64", [0, 0])


@pytest.mark.parametrize("shape", [[], [2, 0], [0]])
def test_create_empty_shape(shape):
    with pytest.raises(EmptyShape):
        tensor_create(shape, "f64", [])


def test_create_rank4():
    t = tensor_create([2, 3, 1, 4], "u8", np.arange(24))
    assert t.ndim == 4


def test_unknown_dtype():
    with pytest.raises(UnknownDtype):
        tensor_create([1], np.int32, [1])


@pytest.mark.parametrize(
    "arr,size",
    [
        (np.array([1.0], dtype=np.float32), 20),
        (np.zeros((2, 2), dtype=np.uint8), 28),
        (np.zeros((3, 5), dtype=np.float64), 8 + 16 + 120),
    ],
)
def test_write_byte_count(arr, size):
    buf = io.BytesIO()
    assert tensor_write(arr, buf) == size
    assert len(buf.getvalue()) == size


def test_header_layout():
    data = tensor_to_bytes(np.ones((2, 3), dtype=np.uint8))
    assert data[:4] == b"SPTN"
    assert struct.unpack("<HBB", data[4:8]) == (1, 2, 2)
    assert struct.unpack("<2Q", data[8:24]) == (2, 3)


def test_bad_magic():
    data = bytearray(tensor_to_bytes(np.ones(3, dtype=np.float32)))
    data[:4] = b"XXXX"
    with pytest.raises(BadMagic):
        tensor_read(bytes(data))


def test_truncated_payload():
    data = tensor_to_bytes(np.ones(3, dtype=np.float32))
    with pytest.raises(TruncatedPayload):
        tensor_read(data[:-4])


def test_unknown_dtype_code_on_read():
    data = bytearray(tensor_to_bytes(np.ones(3, dtype=np.float32)))
    data[6] = 9
    with pytest.raises(UnknownDtype):
        tensor_read(bytes(data))


class _BrokenSink:
    def write(self, b):
        raise OSError("disk full")


def test_write_failure():
    with pytest.raises(IoFailure):
        tensor_write(np.ones(2), _BrokenSink())


def test_file_roundtrip(tmp_path):
    arr = np.arange(12, dtype=np.float64).reshape(3, 4)
    save_tensor(arr, tmp_path / "a.sptn")
    np.testing.assert_array_equal(load_tensor(tmp_path / "a.sptn"), arr)


_dtypes = st.sampled_from([np.float32, np.float64, np.uint8])


@st.composite
def tensors(draw):
    shape = draw(st.lists(st.integers(1, 4), min_size=1, max_size=4))
    dtype = draw(_dtypes)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if dtype is np.uint8:
        return rng.integers(0, 256, size=shape).astype(np.uint8)
    return rng.normal(size=shape).astype(dtype)


@settings(max_examples=100)
@given(tensors())
def test_roundtrip_bit_exact(arr):
    back = tensor_read(tensor_to_bytes(arr))
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()
    assert tensor_to_bytes(back) == tensor_to_bytes(arr)


def test_seq_sum_is_left_to_right():
    vals = np.array([1e16, 1.0, -1e16, 1.0])
    expected = 0.0
    for v in vals:
        expected += v
    assert seq_sum(vals) == expected


def test_seq_sum_axis():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(seq_sum(a, axis=-1), [3.0, 12.0])
    assert as_f64(np.float32(1.5)).dtype == np.float64
