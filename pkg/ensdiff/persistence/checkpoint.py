"""
VDMW model checkpoints.

Layout (little-endian):
  b"VDMW", u16 version, u16 kind (0 denoiser, 1 regressor)
  7 x u32 architecture: field h, w, grid h, w, width, blocks, embedding dims
  u32 T, f64 sr_min, f64 sr_max, f64 lambda
  4 x f64 standardizers: target mean, std, conditioning mean, std
  u32 tensor count, then per tensor: u16 rank, rank x u32 dims, f32 values
Tensors follow the network's weight order.
"""

import io
import os
import struct
from typing import Union

import numpy as np
import structlog

from ..core.enums import DenoiserKind
from ..core.exceptions import FormatError
from ..core.fields import Standardizer
from ..core.schedule import make_schedule
from ..models.network import NetworkArchitecture, ToyDenoiser, ToyRegressor

logger = structlog.get_logger(__name__)

MAGIC = b"VDMW"
VERSION = 1

_PREAMBLE = struct.Struct("<4sHH")
_ARCHITECTURE = struct.Struct("<7I")
_SCHEDULE = struct.Struct("<I3d")
_STANDARDIZERS = struct.Struct("<4d")
_COUNT = struct.Struct("<I")
_RANK = struct.Struct("<H")

Network = Union[ToyDenoiser, ToyRegressor]


def encode_checkpoint(model: Network) -> bytes:
    arch = model.architecture
    s = model.schedule
    out = io.BytesIO()
    out.write(_PREAMBLE.pack(MAGIC, VERSION, model.kind.value))
    out.write(_ARCHITECTURE.pack(*arch.field_shape, *arch.grid_shape, arch.width, arch.blocks, arch.embedding_dims))
    out.write(_SCHEDULE.pack(s.T, s.sr_min, s.sr_max, s.lambda_))
    out.write(_STANDARDIZERS.pack(
        model.target_standardizer.mean, model.target_standardizer.std,
        model.cond_standardizer.mean, model.cond_standardizer.std,
    ))
    weights = model.get_weights()
    out.write(_COUNT.pack(len(weights)))
    for tensor in weights:
        values = np.ascontiguousarray(tensor, dtype="<f4")
        out.write(_RANK.pack(values.ndim))
        out.write(struct.pack(f"<{values.ndim}I", *values.shape))
        out.write(values.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.offset = 0
        self.source = source

    def unpack(self, layout: struct.Struct):
        if self.offset + layout.size > len(self.blob):
            raise FormatError(f"{self.source}: checkpoint truncated at byte {self.offset}")
        values = layout.unpack_from(self.blob, self.offset)
        self.offset += layout.size
        return values

    def array(self, shape) -> np.ndarray:
        size = int(np.prod(shape, dtype=np.int64)) * 4
        if self.offset + size > len(self.blob):
            raise FormatError(f"{self.source}: weight payload truncated at byte {self.offset}")
        values = np.frombuffer(self.blob, dtype="<f4", count=size // 4, offset=self.offset).reshape(shape)
        self.offset += size
        return values.astype(np.float32)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Network:
    reader = _Reader(blob, source)
    magic, version, kind_value = reader.unpack(_PREAMBLE)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}; not a VDMW checkpoint")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version} (this build reads {VERSION})")
    try:
        kind = DenoiserKind(kind_value)
    except ValueError as e:
        raise FormatError(f"{source}: unknown network kind {kind_value}") from e

    fh, fw, gh, gw, width, blocks, embedding_dims = reader.unpack(_ARCHITECTURE)
    T, sr_min, sr_max, lambda_ = reader.unpack(_SCHEDULE)
    t_mean, t_std, c_mean, c_std = reader.unpack(_STANDARDIZERS)
    architecture = NetworkArchitecture((fh, fw), (gh, gw), width, blocks, embedding_dims)

    cls = ToyDenoiser if kind is DenoiserKind.DENOISER else ToyRegressor
    model = cls(
        make_schedule(T, sr_min, sr_max, lambda_),
        architecture,
        Standardizer(t_mean, t_std),
        Standardizer(c_mean, c_std),
    )

    (count,) = reader.unpack(_COUNT)
    weights = []
    for _ in range(count):
        (rank,) = reader.unpack(_RANK)
        dims = reader.unpack(struct.Struct(f"<{rank}I"))
        weights.append(reader.array(dims))
    if reader.offset != len(blob):
        raise FormatError(f"{source}: {len(blob) - reader.offset} trailing bytes after weights")
    model.set_weights(weights)
    return model


def save_checkpoint(path: str, model: Network) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_checkpoint(model))
    logger.info("checkpoint_saved", path=path, kind=model.kind.name.lower(), parameters=model.count_params())


def load_checkpoint(path: str) -> Network:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e.strerror}") from e
    return decode_checkpoint(blob, path)
