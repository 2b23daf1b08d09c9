"""Portable binary tensor file for masks and beamformer weights.

Layout (little-endian):

    offset  size  field
    0       8     magic b"MBTENSR1"
    8       4     uint32 dtype code: 0 = float64, 1 = complex128
    12      4     uint32 number of dimensions N (1..4)
    16      8*N   uint64 dims
    ...     -     data, row-major (C order)
"""

import struct

import numpy as np

from .errors import InputError

MAGIC = b"MBTENSR1"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype("float64"): 0, np.dtype("complex128"): 1}


def save_tensor(array, path):
    array = np.asarray(array)
    if array.dtype not in _CODES:
        if np.iscomplexobj(array):
            array = array.astype(np.complex128)
        else:
            array = array.astype(np.float64)
    if not 1 <= array.ndim <= 4:
        raise InputError(f"tensor rank must be 1..4, got {array.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", _CODES[array.dtype], array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(np.ascontiguousarray(array).astype(
            _DTYPES[_CODES[array.dtype]]).tobytes())


def load_tensor(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise InputError(f"{path}: not a tensor file (bad magic)")
    code, ndim = struct.unpack_from("<II", data, 8)
    if code not in _DTYPES:
        raise InputError(f"{path}: unknown dtype code {code}")
    if not 1 <= ndim <= 4:
        raise InputError(f"{path}: bad rank {ndim}")
    dims = struct.unpack_from(f"<{ndim}Q", data, 16)
    offset = 16 + 8 * ndim
    count = int(np.prod(dims))
    expected = offset + count * _DTYPES[code].itemsize
    if len(data) != expected:
        raise InputError(f"{path}: size mismatch (expected {expected} bytes, got {len(data)})")
    arr = np.frombuffer(data, dtype=_DTYPES[code], count=count, offset=offset)
    return arr.reshape(dims).copy()
