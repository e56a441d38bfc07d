"""Little-endian binary interchange files: PWAT (attention), PWEB (embeddings)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

VERSION = 1


def _write_header(fh, magic: bytes, *dims: int) -> None:
    fh.write(magic)
    fh.write(struct.pack("<I", VERSION))
    for d in dims:
        fh.write(struct.pack("<I", d))


def _read_header(fh, magic: bytes, n_dims: int) -> tuple[int, ...]:
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    raw = fh.read(4 * (n_dims + 1))
    if len(raw) != 4 * (n_dims + 1):
        raise FormatError("truncated header")
    version, *dims = struct.unpack(f"<{n_dims + 1}I", raw)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    return tuple(dims)


def _read_f32(fh, count: int) -> np.ndarray:
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise FormatError(f"truncated payload: expected {count} float32 values")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def write_attention(path: str | Path, attn: np.ndarray) -> None:
    attn = np.asarray(attn)
    if attn.ndim != 2 or attn.shape[0] != attn.shape[1]:
        raise FormatError("attention matrix must be square")
    with open(path, "wb") as fh:
        _write_header(fh, b"PWAT", attn.shape[0])
        fh.write(attn.astype("<f4").tobytes())


def read_attention(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = _read_header(fh, b"PWAT", 1)
        return _read_f32(fh, n * n).reshape(n, n)


def write_embeddings(path: str | Path, emb: np.ndarray) -> None:
    emb = np.atleast_2d(np.asarray(emb))
    with open(path, "wb") as fh:
        _write_header(fh, b"PWEB", emb.shape[0], emb.shape[1])
        fh.write(emb.astype("<f4").tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, dim = _read_header(fh, b"PWEB", 2)
        return _read_f32(fh, rows * dim).reshape(rows, dim)
