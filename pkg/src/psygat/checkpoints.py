"""Checkpoint persistence: a JSON header plus a raw little-endian float32
parameter blob, with an ordered parameter index in the header.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .causal import CausalConfig, ScorerParams
from .model import ModelConfig, ModelParams
from .train import Checkpoint, TrainConfig


class CheckpointError(ValueError):
    pass


def _write_pair(prefix, header, arrays):
    prefix = Path(prefix)
    index = []
    offset = 0
    chunks = []
    for name, arr in arrays:
        flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "size": flat.size})
        offset += flat.size
        chunks.append(flat.tobytes())
    header = dict(header, params=index)
    tmp_json = prefix.with_suffix(".json.tmp")
    tmp_bin = prefix.with_suffix(".bin.tmp")
    tmp_json.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp_bin.write_bytes(b"".join(chunks))
    tmp_json.replace(prefix.with_suffix(".json"))
    tmp_bin.replace(prefix.with_suffix(".bin"))


def _read_pair(prefix):
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
    blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f4")
    arrays = {}
    for entry in header["params"]:
        a, b = entry["offset"], entry["offset"] + entry["size"]
        arrays[entry["name"]] = blob[a:b].reshape(entry["shape"]).copy()
    return header, arrays


def save_checkpoint(prefix, checkpoint):
    header = {
        "kind": "session_model",
        "model_config": checkpoint.params.config.to_json(),
        "train_config": checkpoint.train_config.to_json(),
        "seed": checkpoint.seed,
        "epoch": checkpoint.epoch,
        "best_val_pr_auc": checkpoint.best_val_pr_auc,
        "threshold": checkpoint.threshold,
    }
    _write_pair(prefix, header, [(n, t.data) for n, t in checkpoint.params.named()])


def load_checkpoint(prefix):
    header, arrays = _read_pair(prefix)
    if header.get("kind") != "session_model":
        raise CheckpointError(f"{prefix}: not a session-model checkpoint")
    params = ModelParams(ModelConfig.from_json(header["model_config"]), seed=0)
    for name, t in params.named():
        if name not in arrays:
            raise CheckpointError(f"{prefix}: missing parameter {name}")
        if list(t.data.shape) != list(arrays[name].shape):
            raise CheckpointError(f"{prefix}: shape mismatch for {name}")
        t.data = arrays[name].astype(t.data.dtype)
    return Checkpoint(
        params=params,
        train_config=TrainConfig.from_json(header["train_config"]),
        best_val_pr_auc=header["best_val_pr_auc"],
        threshold=header["threshold"],
        seed=header["seed"],
        epoch=header["epoch"],
    )


def save_scorer(prefix, scorer, extra=None):
    header = {
        "kind": "causal_scorer",
        "causal_config": scorer.config.to_json(),
        "model_hidden": scorer.model_hidden,
    }
    if extra:
        header.update(extra)
    _write_pair(prefix, header, [(n, t.data) for n, t in scorer.named()])


def load_scorer(prefix):
    header, arrays = _read_pair(prefix)
    if header.get("kind") != "causal_scorer":
        raise CheckpointError(f"{prefix}: not a causal-scorer checkpoint")
    scorer = ScorerParams(CausalConfig.from_json(header["causal_config"]),
                          model_hidden=header["model_hidden"], seed=0)
    for name, t in scorer.named():
        t.data = arrays[name].astype(t.data.dtype)
    return scorer


def checkpoint_hash(prefix):
    """Stable digest over header and blob, for post-hoc no-mutation checks."""
    prefix = Path(prefix)
    h = hashlib.sha256()
    h.update(prefix.with_suffix(".json").read_bytes())
    h.update(prefix.with_suffix(".bin").read_bytes())
    return h.hexdigest()
