"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes   b"BBFNCKPT"
    version    u32       1
    meta_len   u32       length of the UTF-8 JSON blob that follows
    meta       bytes     {"config": ModelConfig dict, "extra": {...}}
    count      u32       number of parameter entries
    repeated count times:
        name_len  u16
        name      bytes  UTF-8 canonical parameter path
        ndim      u32
        dims      u32 * ndim
        data      float32 LE * prod(dims), row-major

Entries appear in canonical (definition) order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import BBFN, ModelConfig

MAGIC = b"BBFNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(model: BBFN, extra: dict | None = None) -> bytes:
    meta = json.dumps({"config": model.config.to_dict(), "extra": extra or {}}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta]
    params = model.parameters()
    parts.append(struct.pack("<I", len(params)))
    for name, p in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(parts)


def save(path, model: BBFN, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, extra))


def from_bytes(buf: bytes) -> tuple[BBFN, dict]:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a bbfn checkpoint")
    pos = 8
    version, meta_len = struct.unpack_from("<II", buf, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 8
    meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(dims)) if ndim else 1
        arrays[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * size
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes")
    model = BBFN(ModelConfig.from_dict(meta["config"])).to(np.float32)
    params = model.parameters()
    if set(params) != set(arrays):
        missing, unknown = sorted(set(params) - set(arrays)), sorted(set(arrays) - set(params))
        raise CheckpointError(f"parameter names do not match the config (missing {missing[:3]}, unknown {unknown[:3]})")
    for name, p in params.items():
        if p.shape != arrays[name].shape:
            raise CheckpointError(f"{name}: shape {arrays[name].shape} != expected {p.shape}")
        p.data = arrays[name]
    return model, meta.get("extra", {})


def load(path) -> tuple[BBFN, dict]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
