"""CVT1: the tiny on-disk tensor container used for every array artifact.

Layout, all little-endian:
    magic "CVT1" | version u16 (=1) | dtype u8 | ndim u8 | ndim x u64 dims
    | row-major payload

dtype codes: 0 = float32, 1 = float64, 2 = uint8, 3 = int32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CVT1"
VERSION = 1
MAX_NDIM = 6

# numpy dtypes pinned little-endian so files are identical across hosts
_CODE_TO_DTYPE = {0: "<f4", 1: "<f8", 2: "|u1", 3: "<i4"}
_KIND_TO_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1,
                 np.dtype(np.uint8): 2, np.dtype(np.int32): 3}


class ContainerError(IOError):
    pass


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _KIND_TO_CODE.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ContainerError(f"unsupported dtype {arr.dtype}; use f32/f64/u8/i32")
    if arr.ndim > MAX_NDIM:
        raise ContainerError(f"too many dimensions: {arr.ndim} > {MAX_NDIM}")
    header = MAGIC + struct.pack("<HBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr).astype(_CODE_TO_DTYPE[code], copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ContainerError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}")
    version, code, ndim = struct.unpack("<HBB", blob[4:8])
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if code not in _CODE_TO_DTYPE:
        raise ContainerError(f"{path}: unknown dtype code {code}")
    if ndim > MAX_NDIM:
        raise ContainerError(f"{path}: dimension overflow ({ndim})")
    dims_end = 8 + 8 * ndim
    if len(blob) < dims_end:
        raise ContainerError(f"{path}: truncated dimension list")
    shape = struct.unpack(f"<{ndim}Q", blob[8:dims_end])
    dtype = np.dtype(_CODE_TO_DTYPE[code])
    count = 1
    for d in shape:
        count *= d
    expected = dims_end + count * dtype.itemsize
    if len(blob) != expected:
        raise ContainerError(f"{path}: payload size {len(blob) - dims_end}, expected {expected - dims_end}")
    arr = np.frombuffer(blob[dims_end:], dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("="), copy=True)
