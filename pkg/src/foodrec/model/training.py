"""Deterministic SGD-with-momentum training loop.

Everything stochastic (weight init, epoch shuffles, augmentation) draws
from substreams of the config seed, so identical (data, config, seed)
produce byte-identical checkpoints. The returned checkpoint holds the
parameters of the epoch with the best validation top-1 (earliest epoch on
ties), not the last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..imaging import AugmentationSpec, augment
from ..rng import Rng, derive_seed
from .checkpoint import ModelCheckpoint, normalize_batch
from .losses import FocalLossConfig, LossError, loss_gradient_logits, softmax
from .network import ModelConfig, Network


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    loss: str = "cross_entropy"              # "cross_entropy" | "focal"
    focal: FocalLossConfig | None = None     # defaults to gamma=2 when loss="focal"
    augmentation: AugmentationSpec | None = None

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise TrainError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise TrainError("batch_size must be >= 1")
        if self.epochs < 0:
            raise TrainError("epochs must be >= 0")
        if self.loss not in ("cross_entropy", "focal"):
            raise TrainError(f"unknown loss {self.loss!r}")

    def resolve_loss(self) -> FocalLossConfig:
        """Both losses run through the focal formula; CE is gamma=0, alpha=1."""
        if self.loss == "cross_entropy":
            return FocalLossConfig(gamma=0.0, alpha=None)
        return self.focal if self.focal is not None else FocalLossConfig(gamma=2.0)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_top1: float
    val_loss: float
    val_top1: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": _none_if_nan(self.train_loss),
            "train_top1": _none_if_nan(self.train_top1),
            "val_loss": _none_if_nan(self.val_loss),
            "val_top1": _none_if_nan(self.val_top1),
        }


def _none_if_nan(value: float) -> float | None:
    return None if math.isnan(value) else value


def _evaluate(net: Network, params, x, y, loss_cfg, batch_size=256):
    if len(y) == 0:
        return float("nan"), float("nan")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(y), batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        logits, _ = net.forward(xb, params)
        probs = softmax(logits)
        p = probs[np.arange(len(yb)), yb]
        alpha = (
            np.ones(len(yb))
            if loss_cfg.alpha is None
            else np.asarray(loss_cfg.alpha)[yb]
        )
        per = -alpha * (1.0 - p) ** loss_cfg.gamma * np.log(np.maximum(p, 1e-12))
        total_loss += float(per.sum())
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_loss / len(y), correct / len(y)


def train(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    val_images: np.ndarray,
    val_labels: np.ndarray,
    model_config: ModelConfig,
    config: TrainConfig,
    label_space: list[str],
    metadata: dict | None = None,
) -> tuple[ModelCheckpoint, list[EpochMetrics]]:
    """Train and return (best-validation checkpoint, per-epoch history)."""
    config.validate()
    if len(train_labels) == 0:
        raise TrainError("training split is empty")
    loss_cfg = config.resolve_loss()
    loss_cfg.validate(model_config.num_classes)

    net = Network(model_config)
    params = net.init_params(Rng(derive_seed(config.seed, "init")))
    flat = net.flatten(params)
    velocity = np.zeros_like(flat)

    train_x = normalize_batch(train_images)
    val_x = normalize_batch(val_images) if len(val_labels) else np.zeros((0,) + tuple(model_config.input_shape))
    train_y = np.asarray(train_labels, dtype=np.int64)
    val_y = np.asarray(val_labels, dtype=np.int64)

    history: list[EpochMetrics] = []

    def snapshot_metrics(epoch: int) -> EpochMetrics:
        tr_loss, tr_top1 = _evaluate(net, params, train_x, train_y, loss_cfg)
        va_loss, va_top1 = _evaluate(net, params, val_x, val_y, loss_cfg)
        return EpochMetrics(epoch, tr_loss, tr_top1, va_loss, va_top1)

    history.append(snapshot_metrics(0))
    best = history[0]
    best_flat = flat.copy()

    for epoch in range(1, config.epochs + 1):
        order = list(range(len(train_y)))
        Rng(derive_seed(config.seed, "epoch", epoch)).shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            if config.augmentation is not None:
                raw = train_images[batch_idx]
                xb = np.stack(
                    [
                        augment(
                            raw[j],
                            config.augmentation,
                            Rng(derive_seed(config.seed, "aug", epoch, batch_idx[j])),
                        )
                        for j in range(len(batch_idx))
                    ]
                )
                xb = normalize_batch(xb)
            else:
                xb = train_x[batch_idx]
            yb = train_y[batch_idx]

            logits, caches = net.forward(xb, params)
            dlogits = loss_gradient_logits(softmax(logits), yb, loss_cfg)
            grads = net.backward(dlogits, caches, params)
            gflat = net.flatten(grads)
            velocity = config.momentum * velocity - config.learning_rate * gflat
            flat = flat + velocity
            params = net.unflatten(flat)

        metrics = snapshot_metrics(epoch)
        history.append(metrics)
        if len(val_y) and metrics.val_top1 > best.val_top1:
            best = metrics
            best_flat = flat.copy()
        elif not len(val_y):
            best = metrics
            best_flat = flat.copy()

    # Wall-clock time stays out of the checkpoint: identical (data, config,
    # seed) must produce byte-identical files.
    meta = dict(metadata or {})
    meta.update(
        {
            "seed": config.seed,
            "loss": config.loss,
            "gamma": loss_cfg.gamma,
            "epochs": config.epochs,
            "best_epoch": best.epoch,
            "best_val_top1": _none_if_nan(best.val_top1),
            "final_val_top1": _none_if_nan(history[-1].val_top1),
            "history": [m.to_dict() for m in history],
        }
    )
    ckpt = ModelCheckpoint(
        config=model_config, params=best_flat, label_space=list(label_space), metadata=meta
    )
    return ckpt, history
