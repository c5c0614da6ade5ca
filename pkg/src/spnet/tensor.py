"""Dense tensors and the SPTN binary container.

Tensors are plain read-only numpy arrays restricted to three storage dtypes.
SPTN layout (little-endian): ``b"SPTN"``, u16 version, u8 dtype code, u8 rank,
rank x u64 dims, row-major payload.
"""
import io
import os
import struct
import sys

import numpy as np

from .exceptions import (
    BadMagic,
    DimOverflow,
    EmptyShape,
    IoFailure,
    ShapeMismatch,
    TruncatedPayload,
    UnknownDtype,
)

MAGIC = b"SPTN"
VERSION = 1

F32, F64, U8 = 0, 1, 2
DTYPES = {
    F32: np.dtype("<f4"),
    F64: np.dtype("<f8"),
    U8: np.dtype("u1"),
}
_NAMES = {"f32": F32, "f64": F64, "u8": U8}

_HEADER = struct.Struct("<4sHBB")


def dtype_code(dtype):
    """Map a numpy dtype, dtype name ("f32"/"f64"/"u8") or code to its SPTN code."""
    if isinstance(dtype, str) and dtype in _NAMES:
        return _NAMES[dtype]
    if isinstance(dtype, (int, np.integer)) and not isinstance(dtype, bool):
        if int(dtype) in DTYPES:
            return int(dtype)
        raise UnknownDtype(f"unknown dtype code {dtype}")
    try:
        dt = np.dtype(dtype)
    except TypeError as exc:
        raise UnknownDtype(f"unsupported dtype {dtype!r}") from exc
    key = (dt.kind, dt.itemsize)
    if key == ("f", 4):
        return F32
    if key == ("f", 8):
        return F64
    if key == ("u", 1):
        return U8
    raise UnknownDtype(f"unsupported dtype {dtype!r}")


def _check_shape(shape):
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0 or any(d < 1 for d in shape):
        raise EmptyShape(f"invalid shape {shape}")
    return shape


def tensor_create(shape, dtype, data):
    """Build a validated, immutable tensor from a flat row-major buffer.

    >>> tensor_create([2, 2], "f64", [1, 2, 3, 4])[1, 0]
    3.0
    """
    shape = _check_shape(shape)
    code = dtype_code(dtype)
    flat = np.asarray(data).reshape(-1)
    expected = int(np.prod(shape, dtype=object))
    if flat.size != expected:
        raise ShapeMismatch(f"data length {flat.size} does not match shape {shape}")
    arr = np.array(flat, dtype=DTYPES[code]).reshape(shape)
    arr.setflags(write=False)
    return arr


def as_tensor(arr):
    """Validate an existing array as a tensor (rank >= 1, no zero dims, known dtype)."""
    arr = np.asarray(arr)
    _check_shape(arr.shape)
    code = dtype_code(arr.dtype)
    out = np.ascontiguousarray(arr, dtype=DTYPES[code])
    return out


def as_f64(arr):
    """Arithmetic view: every kernel computes in float64 regardless of storage."""
    return np.asarray(arr, dtype=np.float64)


def seq_sum(arr, axis=None):
    """Strict left-to-right sum.

    ``np.sum`` uses pairwise summation whose grouping depends on buffer layout;
    a cumulative sum fixes the order so results are reproducible bit-for-bit.
    """
    arr = as_f64(arr)
    if axis is None:
        flat = arr.reshape(-1)
        if flat.size == 0:
            return 0.0
        return float(np.cumsum(flat)[-1])
    if arr.shape[axis] == 0:
        return np.zeros(np.delete(arr.shape, axis))
    return np.take(np.cumsum(arr, axis=axis), -1, axis=axis)


def pixel_norm(arr):
    """Per-pixel L2 norm over the trailing channel axis, fixed reduction order."""
    arr = as_f64(arr)
    return np.sqrt(seq_sum(arr * arr, axis=-1))


def tensor_write(t, sink):
    """Serialize ``t`` to a binary stream; returns the number of bytes written."""
    t = as_tensor(t)
    code = dtype_code(t.dtype)
    if t.ndim > 255:
        raise ShapeMismatch(f"rank {t.ndim} exceeds 255")
    header = _HEADER.pack(MAGIC, VERSION, code, t.ndim)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = t.astype(DTYPES[code], copy=False).tobytes(order="C")
    try:
        sink.write(header)
        sink.write(dims)
        sink.write(payload)
    except (OSError, ValueError) as exc:
        raise IoFailure(str(exc)) from exc
    return len(header) + len(dims) + len(payload)


def tensor_to_bytes(t):
    buf = io.BytesIO()
    tensor_write(t, buf)
    return buf.getvalue()


def _read_exact(source, n, what):
    data = source.read(n)
    if data is None or len(data) < n:
        raise TruncatedPayload(f"expected {n} bytes of {what}, got {0 if data is None else len(data)}")
    return data


def tensor_read(source):
    """Parse one SPTN tensor from a binary stream or a bytes object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))
    head = source.read(_HEADER.size)
    if len(head) < 4 or head[:4] != MAGIC:
        raise BadMagic(f"bad magic {bytes(head[:4])!r}")
    if len(head) < _HEADER.size:
        raise TruncatedPayload("header truncated")
    _, version, code, rank = _HEADER.unpack(head)
    if version != VERSION:
        raise BadMagic(f"unsupported SPTN version {version}")
    if code not in DTYPES:
        raise UnknownDtype(f"unknown dtype code {code}")
    if rank == 0:
        raise EmptyShape("rank 0 tensor")
    dims = struct.unpack(f"<{rank}Q", _read_exact(source, 8 * rank, "dimensions"))
    if any(d == 0 for d in dims):
        raise EmptyShape(f"zero dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
    nbytes = count * DTYPES[code].itemsize
    if nbytes > sys.maxsize:
        raise DimOverflow(f"shape {dims} exceeds platform limits")
    payload = _read_exact(source, nbytes, "payload")
    arr = np.frombuffer(payload, dtype=DTYPES[code]).reshape(dims)
    return arr


def save_tensor(t, path):
    try:
        with open(path, "wb") as fh:
            return tensor_write(t, fh)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def load_tensor(path):
    with open(os.fspath(path), "rb") as fh:
        return tensor_read(fh)
