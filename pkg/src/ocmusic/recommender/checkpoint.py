"""Recommender checkpoint files.

Layout::

    8 bytes   magic b"OCMREC\\x00\\x01"
    4 bytes   header length n, unsigned little-endian
    n bytes   UTF-8 JSON header (sorted keys):
              {"version": 1, "model": ModelConfig, "train": TrainConfig,
               "items": [external ids in vocabulary order],
               "tensors": [{"name", "shape", "offset"}], "features": {...}}
    rest      float64 little-endian tensor data, concatenated in header order

Side features (music / aesthetic tables), when present, are stored as the
tensors ``feat.music`` and ``feat.aes``.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ModelFormatError
from .model import ModelConfig
from .train import ItemFeatures, TrainConfig
from .vocab import Vocabulary

MAGIC = b"OCMREC\x00\x01"
VERSION = 1


def dumps(params: dict, model_cfg: ModelConfig, train_cfg: TrainConfig, vocab: Vocabulary, features: ItemFeatures | None = None) -> bytes:
    tensors = dict(params)
    if features is not None:
        if features.music is not None:
            tensors["feat.music"] = features.music
        if features.aes is not None:
            tensors["feat.aes"] = features.aes
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": VERSION,
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "items": list(vocab.items),
        "tensors": entries,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(blobs)


def loads(data: bytes):
    """Return ``(params, ModelConfig, TrainConfig, Vocabulary, ItemFeatures)``."""
    if len(data) < 12 or data[:8] != MAGIC:
        raise ModelFormatError("not a recommender checkpoint")
    (n,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12 : 12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt checkpoint header: {exc}") from exc
    if header.get("version") != VERSION:
        raise ModelFormatError(f"unsupported checkpoint version {header.get('version')!r}")
    body = data[12 + n :]
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        end = e["offset"] + 8 * count
        if end > len(body):
            raise ModelFormatError(f"tensor {e['name']} truncated")
        tensors[e["name"]] = np.frombuffer(body[e["offset"] : end], dtype="<f8").reshape(e["shape"]).astype(np.float64)
    features = ItemFeatures(tensors.pop("feat.music", None), tensors.pop("feat.aes", None))
    cfg = ModelConfig(**header["model"])
    return tensors, cfg, TrainConfig(**header["train"]), Vocabulary(header["items"]), features


def save(path, *args, **kwargs):
    with open(path, "wb") as f:
        f.write(dumps(*args, **kwargs))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
