"""
Binary checkpoints.

Layout (little-endian):
  8 bytes   magic  b"MKCAPS01"
  u32       config block length, then UTF-8 `key = value` config block
  u32       tensor count
  per tensor: u16 name length, name bytes, u8 rank, u64 extent per dim,
              row-major float64 values
Training history is stored as the rank-1 tensor `training.history`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.config import build_model, dump_flat, model_to_flat, parse_flat
from core.errors import (
    BadMagicError, CheckpointError, ConfigError, DataError, DimensionError, ShapeMismatchError,
    TruncatedCheckpointError, VersionMismatchError,
)
from core.files import atomic_write_bytes
from models.schemas import ModelConfig
from services.capsnet import ModelParams, check_param_shapes, param_shapes

MAGIC = b"MKCAPS01"
MAGIC_PREFIX = MAGIC[:6]
FORMAT_VERSION = 1
HISTORY_TENSOR = "training.history"


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    history: list[float]


def dumps(params: ModelParams, config: ModelConfig, history: list[float]) -> bytes:
    block = dump_flat({"format_version": FORMAT_VERSION, **model_to_flat(config)}).encode("utf-8")
    tensors = list(params.tensors.items()) + [(HISTORY_TENSOR, np.asarray(history, dtype=np.float64))]

    out = bytearray(MAGIC)
    out += struct.pack("<I", len(block)) + block
    out += struct.pack("<I", len(tensors))
    for name, value in tensors:
        arr = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.tobytes(order="C")
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, size: int, what: str) -> memoryview:
        if size > self.remaining:
            raise TruncatedCheckpointError(
                f"checkpoint truncated reading {what}: need {size} bytes, {self.remaining} left"
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes, expected_n_rois: int | None = None) -> Checkpoint:
    head = bytes(data[:len(MAGIC)])
    if head != MAGIC:
        if head[:len(MAGIC_PREFIX)] == MAGIC_PREFIX and len(head) == len(MAGIC):
            raise VersionMismatchError(f"unsupported checkpoint version {head[6:].decode(errors='replace')!r}")
        raise BadMagicError("not a checkpoint file (bad magic bytes)")

    reader = _Reader(data)
    reader.take(len(MAGIC), "magic")
    (block_len,) = reader.unpack("<I", "config length")
    try:
        values = parse_flat(bytes(reader.take(block_len, "config block")).decode("utf-8"), "checkpoint")
    except (UnicodeDecodeError, ConfigError) as e:
        raise CheckpointError(f"corrupt checkpoint config block: {e}")
    version = values.pop("format_version", None)
    if version != str(FORMAT_VERSION):
        raise VersionMismatchError(f"checkpoint format_version {version}, expected {FORMAT_VERSION}")
    try:
        config = build_model(ModelConfig, values)
    except ConfigError as e:
        raise CheckpointError(f"checkpoint config: {e.detail}")

    (count,) = reader.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for index in range(count):
        (name_len,) = reader.unpack("<H", f"tensor {index} name length")
        name = bytes(reader.take(name_len, f"tensor {index} name")).decode("utf-8", errors="replace")
        (rank,) = reader.unpack("<B", f"{name} rank")
        shape = reader.unpack(f"<{rank}Q", f"{name} extents") if rank else ()
        size = math.prod(shape)
        raw = reader.take(size * 8, f"{name} values")
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.remaining:
        raise CheckpointError(f"{reader.remaining} trailing bytes after the last tensor")

    history = tensors.pop(HISTORY_TENSOR, np.zeros(0)).tolist()
    try:
        check_param_shapes(tensors, config)
    except DimensionError as e:
        raise ShapeMismatchError(f"checkpoint disagrees with its config: {e.detail}")
    extra = set(tensors) - set(param_shapes(config))
    if extra:
        raise ShapeMismatchError(f"checkpoint has tensors not in its config: {sorted(extra)}")
    if expected_n_rois is not None and expected_n_rois != config.n_rois:
        raise ShapeMismatchError(
            f"checkpoint was trained for {config.n_rois} ROIs, data has {expected_n_rois}"
        )
    return Checkpoint(params=ModelParams(tensors), config=config, history=history)


def save_checkpoint(path: Path, params: ModelParams, config: ModelConfig, history: list[float]) -> None:
    atomic_write_bytes(path, dumps(params, config, history))


def load_checkpoint(path: Path, expected_n_rois: int | None = None) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e.strerror}")
    return loads(data, expected_n_rois)
