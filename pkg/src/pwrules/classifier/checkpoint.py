"""PWCK checkpoint files.

Layout (little-endian)::

    b"PWCK" | u32 version | u32 header_len | header JSON (utf-8)
    u32 n_tensors, then per tensor:
        u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 data

The header holds the model config, epoch, Adam step and any caller metadata
(for example the training config hash). Adam moments are stored as tensors
named ``adam_m/<param>`` and ``adam_v/<param>``. Tensors are written in sorted
name order and the header with sorted keys, so equal states give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import ModelConfig, ModelState, param_shapes

MAGIC = b"PWCK"
VERSION = 1


def _tensor_bytes(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.asarray(arr)
    out = [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
    out.extend(struct.pack("<I", d) for d in arr.shape)
    out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def encode(state: ModelState, meta: dict | None = None) -> bytes:
    header = {
        "config": state.config.to_dict(),
        "epoch": state.epoch,
        "step": state.step,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tensors = dict(state.params)
    tensors.update({f"adam_m/{k}": v for k, v in state.adam_m.items()})
    tensors.update({f"adam_v/{k}": v for k, v in state.adam_v.items()})
    parts = [MAGIC, struct.pack("<II", VERSION, len(hbytes)), hbytes, struct.pack("<I", len(tensors))]
    parts.extend(_tensor_bytes(k, tensors[k]) for k in sorted(tensors))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> tuple[ModelState, dict]:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("not a PWCK checkpoint")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
        cfg = ModelConfig(**header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad checkpoint header: {exc}") from exc
    (n,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float64).reshape(shape)
        tensors[name] = arr
    if r.pos != len(data):
        raise FormatError("trailing bytes after checkpoint tensors")
    shapes = param_shapes(cfg)
    params = {k: tensors[k] for k in shapes if k in tensors}
    missing = set(shapes) - set(params)
    if missing:
        raise FormatError(f"checkpoint missing tensors: {sorted(missing)[:3]}")
    for k, shp in shapes.items():
        if params[k].shape != tuple(shp):
            raise FormatError(f"tensor {k} has shape {params[k].shape}, expected {tuple(shp)}")
    adam_m = {k[7:]: v for k, v in tensors.items() if k.startswith("adam_m/")}
    adam_v = {k[7:]: v for k, v in tensors.items() if k.startswith("adam_v/")}
    state = ModelState(cfg, params, adam_m, adam_v, int(header["epoch"]), int(header["step"]))
    return state, header.get("meta", {})


def save_checkpoint(path: str | Path, state: ModelState, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode(state, meta))


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict]:
    return decode(Path(path).read_bytes())
