"""Checkpoint file format, model loading, and top-k prediction.

A checkpoint file is a one-line JSON header (model config, ordered label
space, training metadata, parameter count and a SHA-256 digest of the
parameter bytes) followed by the raw parameters as little-endian float64.
Checkpoints are immutable once written; loading verifies the digest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..taxonomy import NON_FOOD_ID
from .losses import softmax
from .network import ModelConfig, Network

FORMAT_TAG = "foodrec-checkpoint-v1"


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    params: np.ndarray                  # flat float64 vector
    label_space: list[str]              # ordered visual food ids, non-food included
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        expected = Network(self.config).param_count()
        if self.params.size != expected:
            raise CheckpointError(
                f"parameter vector has {self.params.size} values, config needs {expected}"
            )
        if len(self.label_space) != self.config.num_classes:
            raise CheckpointError(
                f"label space has {len(self.label_space)} entries,"
                f" config says {self.config.num_classes} classes"
            )

    @property
    def digest(self) -> str:
        return hashlib.sha256(_param_bytes(self.params)).hexdigest()


def _param_bytes(params: np.ndarray) -> bytes:
    return np.ascontiguousarray(params, dtype="<f8").tobytes()


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> None:
    raw = _param_bytes(ckpt.params)
    header = {
        "format": FORMAT_TAG,
        "config": ckpt.config.to_dict(),
        "label_space": list(ckpt.label_space),
        "metadata": ckpt.metadata,
        "parameter_count": int(ckpt.params.size),
        "parameter_digest": hashlib.sha256(raw).hexdigest(),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        f.write(raw)


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    with open(path, "rb") as f:
        header_line = f.readline()
        raw = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from e
    if header.get("format") != FORMAT_TAG:
        raise CheckpointError(f"not a {FORMAT_TAG} file")
    count = int(header["parameter_count"])
    if len(raw) != count * 8:
        raise CheckpointError(
            f"expected {count * 8} parameter bytes, found {len(raw)}"
        )
    if hashlib.sha256(raw).hexdigest() != header["parameter_digest"]:
        raise CheckpointError("parameter digest mismatch; checkpoint corrupted")
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return ModelCheckpoint(
        config=ModelConfig.from_dict(header["config"]),
        params=params,
        label_space=list(header["label_space"]),
        metadata=dict(header.get("metadata", {})),
    )


def require_serving_label_space(ckpt: ModelCheckpoint) -> None:
    """A servable checkpoint must carry the non-food sentinel class."""
    if NON_FOOD_ID not in ckpt.label_space:
        raise CheckpointError("label space is missing the non-food class")


def normalize_batch(images: np.ndarray) -> np.ndarray:
    """uint8 (N, H, W, 3) or a single image to float64 in [0, 1]."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    return arr.astype(np.float64) / 255.0


def checkpoint_forward(ckpt: ModelCheckpoint, images: np.ndarray) -> np.ndarray:
    """Logits (N, num_classes) for a batch of images."""
    net = Network(ckpt.config)
    logits, _ = net.forward(normalize_batch(images), net.unflatten(ckpt.params))
    return logits


def rank_scores(scores: np.ndarray) -> np.ndarray:
    """Class indices sorted by descending score, ties by ascending index.

    This single rule is shared by prediction, top-k metrics and the serving
    layer so they can never disagree on ordering.
    """
    return np.argsort(-np.asarray(scores, dtype=np.float64), axis=-1, kind="stable")


def predict_topk(
    ckpt: ModelCheckpoint, image: np.ndarray, k: int
) -> list[tuple[str, float]]:
    """Top-k (visual_food_id, softmax score), descending, stable ties."""
    if k < 1:
        raise CheckpointError("k must be >= 1")
    logits = checkpoint_forward(ckpt, image)
    probs = softmax(logits)[0]
    order = rank_scores(probs)
    take = min(k, len(ckpt.label_space))
    return [(ckpt.label_space[i], float(probs[i])) for i in order[:take]]
