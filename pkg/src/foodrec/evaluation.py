"""Offline metrics: top-k accuracy, per-class recall, confusion analysis,
merge-candidate detection and a throughput harness.

Ranking ties are broken by ascending label-space index everywhere, via the
same rule prediction uses, so serving and metrics can never disagree.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model.checkpoint import ModelCheckpoint, checkpoint_forward, rank_scores
from .model.losses import softmax


class EvaluationError(ValueError):
    pass


@dataclass
class EvalReport:
    top1: float
    top5: float
    per_class_recall: dict[str, float]
    confusion: dict[str, dict[str, int]]   # confusion[true][predicted] = count
    label_space: list[str]
    dataset_version: int | None = None
    checkpoint_digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top5": self.top5,
            "per_class_recall": {k: self.per_class_recall[k] for k in sorted(self.per_class_recall)},
            "confusion": {
                t: {p: self.confusion[t][p] for p in sorted(self.confusion[t])}
                for t in sorted(self.confusion)
            },
            "label_space": list(self.label_space),
            "dataset_version": self.dataset_version,
            "checkpoint_digest": self.checkpoint_digest,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            top1=data["top1"],
            top5=data["top5"],
            per_class_recall=dict(data["per_class_recall"]),
            confusion={t: dict(preds) for t, preds in data["confusion"].items()},
            label_space=list(data["label_space"]),
            dataset_version=data.get("dataset_version"),
            checkpoint_digest=data.get("checkpoint_digest"),
        )


@dataclass
class ConfusionEntry:
    visual_food: str
    recall: float
    most_common_incorrect: str


@dataclass
class ThroughputReport:
    images_per_second: float
    batch_size: int
    image_count: int
    wall_time_seconds: float

    def to_dict(self) -> dict:
        return {
            "images_per_second": self.images_per_second,
            "batch_size": self.batch_size,
            "image_count": self.image_count,
            "wall_time_seconds": self.wall_time_seconds,
        }


# ---------------------------------------------------------------------------
# Metrics


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose true label ranks among the k best scores."""
    if k < 1:
        raise EvaluationError("k must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise EvaluationError(
            f"scores {scores.shape} and labels {labels.shape} do not align"
        )
    order = rank_scores(scores)
    hits = (order[:, : min(k, scores.shape[1])] == labels[:, None]).any(axis=1)
    return float(hits.mean())


def confusion_matrix(
    scores: np.ndarray, labels: np.ndarray, label_space: list[str]
) -> dict[str, dict[str, int]]:
    """Top-1 confusion counts keyed by class id; rows exist for every class."""
    order = rank_scores(scores)
    confusion: dict[str, dict[str, int]] = {c: {} for c in label_space}
    for true_idx, pred_idx in zip(np.asarray(labels, dtype=np.int64), order[:, 0]):
        row = confusion[label_space[true_idx]]
        pred = label_space[pred_idx]
        row[pred] = row.get(pred, 0) + 1
    return confusion


def per_class_recall(confusion: dict[str, dict[str, int]]) -> dict[str, float]:
    """recall(c) = confusion[c][c] / row sum; classes with no instances are skipped."""
    recalls = {}
    for cls, row in confusion.items():
        total = sum(row.values())
        if total:
            recalls[cls] = row.get(cls, 0) / total
    return recalls


def evaluate(
    ckpt: ModelCheckpoint,
    images: np.ndarray,
    labels: np.ndarray,
    dataset_version: int | None = None,
    batch_size: int = 256,
) -> EvalReport:
    """Full evaluation pass producing the report the analysis ops consume."""
    scores = []
    for start in range(0, len(labels), batch_size):
        logits = checkpoint_forward(ckpt, images[start : start + batch_size])
        scores.append(softmax(logits))
    score_matrix = np.concatenate(scores) if scores else np.zeros((0, ckpt.config.num_classes))
    confusion = confusion_matrix(score_matrix, labels, ckpt.label_space)
    return EvalReport(
        top1=topk_accuracy(score_matrix, labels, 1),
        top5=topk_accuracy(score_matrix, labels, 5),
        per_class_recall=per_class_recall(confusion),
        confusion=confusion,
        label_space=list(ckpt.label_space),
        dataset_version=dataset_version,
        checkpoint_digest=ckpt.digest,
    )


# ---------------------------------------------------------------------------
# Confusion analysis


def _most_common_incorrect(cls: str, row: dict[str, int]) -> tuple[str, int] | None:
    """Highest off-diagonal count in the row; ties by ascending class id."""
    wrong = [(count, pred) for pred, count in row.items() if pred != cls and count > 0]
    if not wrong:
        return None
    best_count = max(count for count, _ in wrong)
    best_pred = min(pred for count, pred in wrong if count == best_count)
    return best_pred, best_count


def confusion_report(report: EvalReport, n_worst: int) -> list[ConfusionEntry]:
    """The n_worst lowest-recall classes that have at least one incorrect
    prediction, each with its most common wrong target. Ascending recall,
    ties by class id."""
    class_count = len(report.label_space)
    if n_worst > class_count:
        raise EvaluationError(
            f"n_worst {n_worst} exceeds class count {class_count}"
        )
    entries = []
    for cls in report.label_space:
        row = report.confusion.get(cls, {})
        worst = _most_common_incorrect(cls, row)
        if worst is None:
            continue
        total = sum(row.values())
        entries.append(ConfusionEntry(cls, row.get(cls, 0) / total, worst[0]))
    entries.sort(key=lambda e: (e.recall, e.visual_food))
    return entries[:n_worst]


def merge_candidates(
    report: EvalReport, mutual_fraction_threshold: float
) -> list[tuple[str, str]]:
    """Class pairs that are each other's dominant confusion target.

    A pair (A, B) qualifies when A's most common incorrect prediction is B,
    B's is A, and in both directions the misclassified fraction of the
    class's instances reaches the threshold. Deduplicated and sorted.
    """
    if not 0.0 < mutual_fraction_threshold <= 1.0:
        raise EvaluationError("mutual_fraction_threshold must be in (0, 1]")
    dominant: dict[str, tuple[str, float]] = {}
    for cls, row in report.confusion.items():
        total = sum(row.values())
        worst = _most_common_incorrect(cls, row)
        if worst is not None and total:
            dominant[cls] = (worst[0], worst[1] / total)
    pairs = set()
    for a, (b, frac_ab) in dominant.items():
        partner = dominant.get(b)
        if partner is None:
            continue
        back, frac_ba = partner
        if back == a and frac_ab >= mutual_fraction_threshold and frac_ba >= mutual_fraction_threshold:
            pairs.add(tuple(sorted((a, b))))
    return sorted(pairs)


# ---------------------------------------------------------------------------
# Throughput


def measure_throughput(
    forward_fn, images: np.ndarray, batch_size: int
) -> ThroughputReport:
    """Wall-clock images/second over full forward passes.

    ``forward_fn`` is any callable mapping an image batch to logits, so the
    harness works for real checkpoints and injected-delay mocks alike.
    Decode/preprocessing is excluded: the clock covers inference only.
    """
    count = len(images)
    if count < 1:
        raise EvaluationError("need at least one image")
    if batch_size < 1:
        raise EvaluationError("batch_size must be >= 1")
    start = time.perf_counter()
    for begin in range(0, count, batch_size):
        forward_fn(images[begin : begin + batch_size])
    wall = time.perf_counter() - start
    return ThroughputReport(
        images_per_second=count / wall,
        batch_size=batch_size,
        image_count=count,
        wall_time_seconds=wall,
    )


def measure_checkpoint_throughput(
    ckpt: ModelCheckpoint, images: np.ndarray, batch_size: int
) -> ThroughputReport:
    """Forward-pass rate of a real checkpoint (decode excluded)."""
    return measure_throughput(
        lambda batch: checkpoint_forward(ckpt, batch), images, batch_size
    )
