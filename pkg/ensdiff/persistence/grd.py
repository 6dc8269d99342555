"""
GRD1 binary grid format.

Layout (little-endian): magic b"GRD1", u16 version, u16 rank, rank x u32 dims,
then prod(dims) f32 values in row-major order.
"""

import os
import struct
from typing import Tuple

import numpy as np

from ..core.exceptions import FormatError

MAGIC = b"GRD1"
VERSION = 1
_HEADER = struct.Struct("<4sHH")


def encode_grd(array: np.ndarray) -> bytes:
    values = np.ascontiguousarray(array, dtype="<f4")
    if values.ndim < 1:
        raise FormatError("GRD1 needs an array of rank >= 1")
    dims = struct.pack(f"<{values.ndim}I", *values.shape)
    return _HEADER.pack(MAGIC, VERSION, values.ndim) + dims + values.tobytes()


def decode_grd(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: too short for a GRD1 header")
    magic, version, rank = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}; not a GRD1 file")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported GRD1 version {version} (this build reads version {VERSION})")
    if rank < 1:
        raise FormatError(f"{source}: rank must be >= 1")
    dims_end = _HEADER.size + 4 * rank
    if len(blob) < dims_end:
        raise FormatError(f"{source}: truncated dimension table")
    dims: Tuple[int, ...] = struct.unpack_from(f"<{rank}I", blob, _HEADER.size)
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise FormatError(
            f"{source}: payload has {len(payload)} bytes but dims {list(dims)} need {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def write_grd(path: str, array: np.ndarray) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_grd(array))


def read_grd(path: str, expected_rank: int = 0) -> np.ndarray:
    """Read a GRD1 file; optionally require a rank."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}") from e
    array = decode_grd(blob, path)
    if expected_rank and array.ndim != expected_rank:
        raise FormatError(f"{path}: expected a rank-{expected_rank} grid, found rank {array.ndim}")
    return array
