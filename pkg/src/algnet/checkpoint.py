"""Single-file checkpoints.

Layout (all integers little-endian):

    magic      4 bytes  b"ALGN"
    version    u32      1
    meta_len   u32      length of the UTF-8 JSON metadata that follows
    meta       bytes    {"config": ..., "sizes": [n_diag, n_proc, n_med],
                         "vocab": ..., "ehr_adj": [[...]], "ddi_adj": [[...]]}
    n_params   u32
    per parameter:
        name_len u16, name (UTF-8)
        ndim     u8,  shape (u32 each)
        data     float64 little-endian, row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .ehr import CodeVocab
from .model import ALGNet

MAGIC = b"ALGN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: ALGNet, vocab: CodeVocab | None = None) -> None:
    meta = {
        "config": model.config.to_json(),
        "sizes": list(model.sizes),
        "vocab": vocab.to_json() if vocab is not None else None,
        "ehr_adj": model.ehr_adj.tolist(),
        "ddi_adj": model.ddi_adj.tolist(),
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", p.data.ndim))
        parts.append(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _read_payload(buf: bytes, path) -> tuple[dict, dict[str, np.ndarray]]:
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, meta_len = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    meta = json.loads(buf[off:off + meta_len].decode())
    off += meta_len
    (n_params,) = struct.unpack_from("<I", buf, off)
    off += 4
    state = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return meta, state


def load_checkpoint(path) -> tuple[ALGNet, CodeVocab | None]:
    buf = Path(path).read_bytes()
    try:
        meta, state = _read_payload(buf, path)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({e})") from None
    config = TrainConfig.from_json(meta["config"])
    model = ALGNet(config, *meta["sizes"], np.array(meta["ehr_adj"]), np.array(meta["ddi_adj"]))
    model.params.load_state_dict(state)
    vocab = CodeVocab.from_json(meta["vocab"]) if meta.get("vocab") else None
    return model, vocab
