"""Production-side metrics computed from the query and feedback logs.

All functions are pure over log snapshots: re-running on identical logs
gives identical numbers, and they can read concurrently with a live
service since the logs are append-only. Feedback is latest-wins per qid
(earlier entries are kept in the log for audit).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone, tzinfo
from pathlib import Path


class AnalyticsError(ValueError):
    pass


@dataclass
class ProductionAccuracy:
    window_start: float | None
    window_end: float | None
    feedback_count: int
    top1: float | None       # None when no feedback fell in the window
    top5: float | None

    def to_dict(self) -> dict:
        return {
            "window_start": self.window_start,
            "window_end": self.window_end,
            "feedback_count": self.feedback_count,
            "top1": self.top1,
            "top5": self.top5,
        }


@dataclass
class UsageHistogram:
    hourly: list[int]        # 24 buckets, local hour of day
    total: int

    def to_dict(self) -> dict:
        return {"hourly": list(self.hourly), "total": self.total}


@dataclass
class CaseStudyEntry:
    visual_food: str
    query_count: int
    top1: float
    top5: float
    most_common_top1: str

    def to_dict(self) -> dict:
        return {
            "visual_food": self.visual_food,
            "query_count": self.query_count,
            "top1": self.top1,
            "top5": self.top5,
            "most_common_top1": self.most_common_top1,
        }


# ---------------------------------------------------------------------------
# Log access


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def parse_window(window: str | None) -> tuple[float | None, float | None]:
    """ISO-8601 interval 'start/end' to UTC timestamps; None = unbounded."""
    if window is None:
        return None, None
    try:
        start_s, end_s = window.split("/")
        return _parse_iso(start_s), _parse_iso(end_s)
    except ValueError as e:
        raise AnalyticsError(
            f"window must be an ISO-8601 interval 'start/end': {e}"
        ) from e


def _parse_iso(text: str) -> float:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _in_window(ts: float, start: float | None, end: float | None) -> bool:
    return (start is None or ts >= start) and (end is None or ts < end)


def latest_feedback_by_qid(feedbacks: list[dict]) -> dict[str, dict]:
    """Last entry per qid wins: by timestamp, then by log position."""
    latest: dict[str, tuple[tuple, dict]] = {}
    for pos, fb in enumerate(feedbacks):
        key = (fb.get("timestamp", 0.0), pos)
        qid = fb["qid"]
        if qid not in latest or key > latest[qid][0]:
            latest[qid] = (key, fb)
    return {qid: fb for qid, (_, fb) in latest.items()}


def _joined(queries, feedbacks, start, end):
    """(query, latest feedback) pairs for queries in the window that got feedback."""
    latest = latest_feedback_by_qid(feedbacks)
    pairs = []
    for q in queries:
        if not _in_window(q.get("timestamp", 0.0), start, end):
            continue
        fb = latest.get(q["qid"])
        if fb is not None:
            pairs.append((q, fb))
    return pairs


def _top_names(query: dict, k: int) -> list[str]:
    return [entry["name"] for entry in query["response"]["food_result"][:k]]


# ---------------------------------------------------------------------------
# Operations


def feedback_accuracy(
    queries: list[dict], feedbacks: list[dict], window: str | None = None
) -> ProductionAccuracy:
    """Top-1/top-5 accuracy judged by the user's chosen label.

    A query counts as top-1 correct when the latest feedback label equals
    the first food_result entry, top-5 correct when it appears among the
    first five. Queries without feedback are excluded.
    """
    start, end = parse_window(window)
    pairs = _joined(queries, feedbacks, start, end)
    if not pairs:
        return ProductionAccuracy(start, end, 0, None, None)
    top1_hits = sum(
        1 for q, fb in pairs if _top_names(q, 1) and fb["chosen_label"] == _top_names(q, 1)[0]
    )
    top5_hits = sum(1 for q, fb in pairs if fb["chosen_label"] in _top_names(q, 5))
    n = len(pairs)
    return ProductionAccuracy(start, end, n, top1_hits / n, top5_hits / n)


def usage_histogram(
    queries: list[dict], tz: tzinfo, window: str | None = None
) -> UsageHistogram:
    """Query counts per local hour of day."""
    start, end = parse_window(window)
    hourly = [0] * 24
    for q in queries:
        ts = q.get("timestamp", 0.0)
        if not _in_window(ts, start, end):
            continue
        hour = datetime.fromtimestamp(ts, tz).hour
        hourly[hour] += 1
    return UsageHistogram(hourly=hourly, total=sum(hourly))


def detect_peaks(histogram: UsageHistogram | list[int]) -> list[int]:
    """Hours whose counts rise above mean + 1 standard deviation.

    Runs of adjacent qualifying hours merge into one peak, reported at the
    run's highest-count hour (earliest on ties). Uniform traffic has no
    hour strictly above the mean, hence no peaks.
    """
    hourly = histogram.hourly if isinstance(histogram, UsageHistogram) else list(histogram)
    n = len(hourly)
    if n == 0:
        return []
    mean = sum(hourly) / n
    variance = sum((c - mean) ** 2 for c in hourly) / n
    threshold = mean + variance ** 0.5
    qualifying = [h for h in range(n) if hourly[h] > threshold]
    peaks = []
    run: list[int] = []
    for h in qualifying + [None]:
        if run and (h is None or h != run[-1] + 1):
            peaks.append(max(run, key=lambda hh: (hourly[hh], -hh)))
            run = []
        if h is not None:
            run.append(h)
    return peaks


def low_top1_high_top5(
    queries: list[dict],
    feedbacks: list[dict],
    min_queries: int = 10,
    top5_floor: float = 0.8,
    top1_ceiling: float = 0.4,
    window: str | None = None,
) -> list[CaseStudyEntry]:
    """Classes the model nearly gets: high top-5 but poor top-1.

    Grouping is by feedback label (the user's ground truth). Each flagged
    class reports its most common top-1 prediction, the likely confuser.
    """
    for threshold in (top5_floor, top1_ceiling):
        if not 0.0 <= threshold <= 1.0:
            raise AnalyticsError("thresholds must be in [0, 1]")
    start, end = parse_window(window)
    by_label: dict[str, list[tuple[dict, dict]]] = {}
    for q, fb in _joined(queries, feedbacks, start, end):
        by_label.setdefault(fb["chosen_label"], []).append((q, fb))

    entries = []
    for label in sorted(by_label):
        group = by_label[label]
        if len(group) < min_queries:
            continue
        tops = [_top_names(q, 1)[0] if _top_names(q, 1) else "" for q, _ in group]
        top1 = sum(1 for t in tops if t == label) / len(group)
        top5 = sum(1 for q, _ in group if label in _top_names(q, 5)) / len(group)
        if top5 >= top5_floor and top1 <= top1_ceiling:
            counts: dict[str, int] = {}
            for t in tops:
                counts[t] = counts.get(t, 0) + 1
            most_common = min(
                counts, key=lambda name: (-counts[name], name)
            )
            entries.append(
                CaseStudyEntry(label, len(group), top1, top5, most_common)
            )
    return entries
