"""Checkpoints: a JSON manifest next to one flat little-endian tensor blob.

``<dir>/manifest.json`` holds the configs, vocabulary, candidate responses,
dataset fingerprint and a tensor directory (name, shape, offset in
elements). ``<dir>/tensors.bin`` holds the tensors back to back in manifest
order, in the model's precision, so a round trip is bit-exact.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .cell import QrnConfig
from .encoding import RESERVED, Vocabulary
from .model import QrnModel
from .trainer import TrainConfig

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "tensors.bin"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: QrnModel, train_config: TrainConfig | None = None,
                    fingerprint: str | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dtype = np.dtype(model.dtype).newbyteorder("<")
    tensors, offset, chunks = [], 0, []
    for p in model.parameters():
        tensors.append({"name": p.name, "shape": list(p.shape), "offset": offset})
        offset += p.data.size
        chunks.append(np.ascontiguousarray(p.data, dtype=dtype).tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "f32" if model.dtype == np.float32 else "f64",
        "model_config": dataclasses.asdict(model.config),
        "train_config": dataclasses.asdict(train_config) if train_config else None,
        "vocabulary": model.vocab.itos,
        "candidates": model.candidates.texts if model.candidates is not None else None,
        "decoder_trained": bool(model.decoder is not None and model.decoder.trained),
        "dataset_fingerprint": fingerprint,
        "tensors": tensors,
        "extra": extra or {},
    }
    (path / BLOB).write_bytes(b"".join(chunks))
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"checkpoint manifest not found: {path / MANIFEST}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path / MANIFEST}: not valid JSON ({e})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {manifest.get('format_version')!r}")
    return manifest


def load_checkpoint(path) -> tuple[QrnModel, TrainConfig | None, dict]:
    """Rebuild the model; returns (model, train config or None, manifest)."""
    path = Path(path)
    manifest = read_manifest(path)
    dtype = np.dtype(np.float32 if manifest["dtype"] == "f32" else np.float64)
    words = manifest["vocabulary"]
    if words[:len(RESERVED)] != list(RESERVED):
        raise CheckpointError(f"{path}: vocabulary does not start with the reserved tokens")
    vocab = Vocabulary(words[len(RESERVED):])
    config = QrnConfig(**manifest["model_config"])
    model = QrnModel(config, vocab, seed=0, dtype=dtype, candidates=manifest["candidates"])
    blob = np.frombuffer((path / BLOB).read_bytes(), dtype=dtype.newbyteorder("<"))
    state = {}
    for t in manifest["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        if t["offset"] + n > blob.size:
            raise CheckpointError(f"{path}: tensor {t['name']} runs past the end of {BLOB}")
        state[t["name"]] = blob[t["offset"]:t["offset"] + n].reshape(t["shape"]).astype(dtype)
    expected = {p.name for p in model.parameters()}
    if set(state) != expected:
        raise CheckpointError(f"{path}: tensor names {sorted(state)} do not match the model {sorted(expected)}")
    model.load_state(state)
    if model.decoder is not None:
        model.decoder.trained = manifest.get("decoder_trained", False)
    tc = manifest.get("train_config")
    return model, (TrainConfig(**tc) if tc else None), manifest
