"""Versioned binary parameter checkpoints.

Layout (all integers uint32 little-endian):

    b"FRL1"
    repeated per parameter, in insertion order:
        name length, utf-8 name, rank, dims[rank], float32 LE data (row-major)

A `model.json` sidecar next to the checkpoint carries the model family and
input spec so a checkpoint can be rebuilt without the experiment config.
"""

from __future__ import annotations

import struct

import numpy as np

from . import io
from .errors import CheckpointError

MAGIC = b"FRL1"


def encode_params(params: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_params(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {data[:4]!r}")
    params: dict[str, np.ndarray] = {}
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("checkpoint truncated")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    while pos < len(data):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    return params


def save_checkpoint(params: dict[str, np.ndarray], uri: str, meta: dict | None = None) -> str:
    """Write params (and the model.json sidecar when `meta` is given)."""
    io.save_bytes(encode_params(params), uri)
    if meta is not None:
        io.save_json(meta, sidecar_uri(uri))
    return uri


def load_checkpoint(uri: str) -> dict[str, np.ndarray]:
    return decode_params(io.load_bytes(uri))


def load_meta(uri: str) -> dict:
    sidecar = sidecar_uri(uri)
    if not io.exists(sidecar):
        raise CheckpointError(f"checkpoint {uri} has no model.json sidecar")
    return io.load_json(sidecar)


def sidecar_uri(uri: str) -> str:
    base = uri.rsplit("/", 1)[0] if "/" in uri else "."
    return f"{base}/model.json"

