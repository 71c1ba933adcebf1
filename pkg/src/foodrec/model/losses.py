"""Classification losses: softmax, cross-entropy and the focal variant.

The focal loss down-weights well-classified samples: with p the predicted
probability of the true class,

    loss = -alpha[y] * (1 - p)^gamma * ln(p)

gamma = 0 with uniform alpha reduces it exactly to cross-entropy. The
probability inside the log is floored at 1e-12 so confidently wrong
predictions cannot produce infinities; the gradient is the exact
derivative of the floored expression, which keeps finite-difference
checks honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

P_FLOOR = 1e-12


class LossError(ValueError):
    pass


@dataclass
class FocalLossConfig:
    """gamma is the focusing strength; alpha weights classes (None = uniform 1)."""

    gamma: float = 2.0
    alpha: np.ndarray | None = None

    def validate(self, num_classes: int) -> None:
        if self.gamma < 0:
            raise LossError("gamma must be >= 0")
        if self.alpha is not None:
            alpha = np.asarray(self.alpha, dtype=np.float64)
            if alpha.shape != (num_classes,):
                raise LossError(
                    f"alpha length {alpha.shape} does not match {num_classes} classes"
                )
            if np.any(alpha < 0):
                raise LossError("alpha weights must be >= 0")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax; rows sum to 1 within 1e-12."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_rows(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise LossError(f"probs {probs.shape} and labels {labels.shape} do not align")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probs.shape[1]:
        raise LossError("labels out of range")
    return probs, labels


def focal_loss(probs: np.ndarray, labels: np.ndarray, config: FocalLossConfig) -> float:
    """Mean focal loss over the batch."""
    probs, labels = _check_rows(probs, labels)
    config.validate(probs.shape[1])
    p = probs[np.arange(len(labels)), labels]
    alpha = (
        np.ones(len(labels))
        if config.alpha is None
        else np.asarray(config.alpha, dtype=np.float64)[labels]
    )
    per_sample = -alpha * (1.0 - p) ** config.gamma * np.log(np.maximum(p, P_FLOOR))
    return float(per_sample.mean())


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; the gamma = 0, alpha = 1 case."""
    probs, labels = _check_rows(probs, labels)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, P_FLOOR)).mean())


def loss_gradient_logits(
    probs: np.ndarray, labels: np.ndarray, config: FocalLossConfig
) -> np.ndarray:
    """Gradient of the mean focal loss with respect to the logits.

    Chains d(loss)/dp through the softmax Jacobian:
    dp/dz_j = p * (1[j = y] - probs_j). The p = 1 rows take the analytic
    limit (zero focal term), and rows at the probability floor drop the
    1/p term, matching the floored forward expression.
    """
    probs, labels = _check_rows(probs, labels)
    config.validate(probs.shape[1])
    n, _ = probs.shape
    rows = np.arange(n)
    p = probs[rows, labels]
    alpha = (
        np.ones(n)
        if config.alpha is None
        else np.asarray(config.alpha, dtype=np.float64)[labels]
    )
    gamma = config.gamma
    one_minus = 1.0 - p
    p_eff = np.maximum(p, P_FLOOR)

    # d/dp [-a (1-p)^g ln p] = a*g*(1-p)^(g-1)*ln p - a*(1-p)^g / p
    term1 = np.zeros(n)
    if gamma > 0:
        active = one_minus > 0.0
        term1[active] = (
            alpha[active]
            * gamma
            * one_minus[active] ** (gamma - 1.0)
            * np.log(p_eff[active])
        )
    term2 = np.where(p > P_FLOOR, alpha * one_minus ** gamma / p_eff, 0.0)
    dloss_dp = term1 - term2

    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0
    dlogits = dloss_dp[:, None] * p[:, None] * (onehot - probs)
    return dlogits / n


def cross_entropy_gradient_logits(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return loss_gradient_logits(probs, labels, FocalLossConfig(gamma=0.0, alpha=None))


def inverse_frequency_alpha(
    counts: dict[str, int], label_space: list[str]
) -> np.ndarray:
    """Per-class weights proportional to 1/count, normalized to mean 1.

    Classes absent from the corpus get weight 0; they never appear as a
    training label so their weight is inert, and leaving them out keeps the
    normalization meaningful for the classes that do occur.
    """
    raw = np.array(
        [1.0 / counts[label] if counts.get(label, 0) > 0 else 0.0 for label in label_space],
        dtype=np.float64,
    )
    nonzero = raw > 0
    if not nonzero.any():
        raise LossError("no class in the label space has any images")
    raw[nonzero] *= nonzero.sum() / raw[nonzero].sum()
    return raw
