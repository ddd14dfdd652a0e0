"""DANM checkpoint files.

Layout (little-endian)::

    b"DANM"  u16 version (1)
    u32      length of the config block
    utf-8 JSON config (DanConfig fields plus "mode")
    f64[]    W_s, b_s, bn_gamma, bn_beta, bn_run_mean, bn_run_var,
             W_1, b_1, W_2, b_2 in this order, each C-contiguous
    u32      CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import ChecksumMismatch, FormatViolation, InvalidConfig, IoFailure, MissingFile
from .network import DanConfig, DanModel

MAGIC = b"DANM"
VERSION = 1
TENSOR_ORDER = ("W_s", "b_s", "bn_gamma", "bn_beta", "bn_run_mean", "bn_run_var", "W_1", "b_1", "W_2", "b_2")
_HEAD = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


def encode_model(model: DanModel) -> bytes:
    cfg = dict(model.config.to_dict(), mode=model.mode)
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(
        [_HEAD.pack(MAGIC, VERSION, len(blob)), blob]
        + [np.ascontiguousarray(getattr(model, n), dtype="<f8").tobytes() for n in TENSOR_ORDER]
    )
    return body + _CRC.pack(zlib.crc32(body))


def decode_model(buf: bytes) -> DanModel:
    if len(buf) < _HEAD.size + _CRC.size:
        raise FormatViolation("truncated checkpoint")
    magic, version, n_cfg = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatViolation(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatViolation(f"unsupported checkpoint version {version}")
    (crc,) = _CRC.unpack_from(buf, len(buf) - _CRC.size)
    if zlib.crc32(buf[:-_CRC.size]) != crc:
        raise ChecksumMismatch("checkpoint checksum does not match its contents")
    off = _HEAD.size
    try:
        cfg = json.loads(buf[off:off + n_cfg].decode("utf-8"))
        mode = cfg.pop("mode", "infer")
        config = DanConfig(**cfg)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError, InvalidConfig) as exc:
        raise FormatViolation(f"invalid config block: {exc}") from None
    off += n_cfg
    shapes = config.param_shapes()
    arrays = {}
    for name in TENSOR_ORDER:
        size = int(np.prod(shapes[name]))
        if off + 8 * size > len(buf) - _CRC.size:
            raise FormatViolation(f"checkpoint ends inside tensor {name}")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shapes[name]).copy()
        off += 8 * size
    if off != len(buf) - _CRC.size:
        raise FormatViolation("trailing bytes after the last tensor")
    return DanModel(config=config, mode=mode, **arrays)


def save_model(model: DanModel, path) -> None:
    try:
        Path(path).write_bytes(encode_model(model))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path) -> DanModel:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"{path} does not exist")
    return decode_model(path.read_bytes())
