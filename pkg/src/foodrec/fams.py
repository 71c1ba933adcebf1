"""Annotation management: tasks, candidate review, and corpus ingestion.

Workflow state machine (strictly forward):

    draft --assign--> assigned --submit--> submitted --confirm--> confirmed

Managers create, assign and confirm; only the assignee updates selections
and submits. Candidate fetching is allowed while the task is draft or
assigned and publishes its results as one atomic event.

The task log is append-only JSON lines (one event per line, with actor and
role recorded), and in-memory state is rebuilt by replay, which makes
role/state auditing and UI polling trivial. Mutations carry an optimistic
version stamp; stale writes are rejected.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .corpus import CorpusStore, ManifestRecord, merge_annotations
from .rng import Rng, derive_seed, fnv1a64
from .taxonomy import Taxonomy, slugify

ROLES = ("manager", "annotator")
STATUSES = ("draft", "assigned", "submitted", "confirmed")


class FamsError(ValueError):
    """Base class; subclasses map onto HTTP status codes in the service."""


class FamsPermissionError(FamsError):
    pass


class FamsStateError(FamsError):
    pass


class FamsNotFoundError(FamsError):
    pass


class FamsConflictError(FamsError):
    """Optimistic version stamp did not match; caller should refetch."""


@dataclass
class CandidateImage:
    candidate_id: str
    source_keyword: str
    full_ref: str
    thumbnail_b64: str          # base64 of the 8x8 RGB preview bytes
    selected: bool = True


@dataclass
class AnnotationTask:
    id: str
    label: str
    keywords: list[str]
    requested_count: int
    created_by: str
    status: str = "draft"
    assignee: str | None = None
    candidates: list[CandidateImage] = field(default_factory=list)
    version: int = 1
    shortfall: bool = False
    dataset_version: int | None = None
    error_note: str | None = None

    def selected_count(self) -> int:
        return sum(1 for c in self.candidates if c.selected)


# ---------------------------------------------------------------------------
# Candidate sources


class DirectoryImageSource:
    """Scans <root>/<keyword-slug>/ for .ppm/.png files.

    Listing order is the sorted filename list shuffled with the task seed,
    so reruns with the same directory contents pick the same candidates.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def candidates(self, keyword: str, count: int, rng: Rng) -> list[tuple[str, np.ndarray]]:
        folder = self.root / slugify(keyword)
        if not folder.is_dir():
            return []
        files = sorted(
            p for p in folder.iterdir() if p.suffix.lower() in (".ppm", ".png")
        )
        rng.shuffle(files)
        picked = files[:count]
        return [(str(p), load_image_file(p)) for p in sorted(picked)]


class SyntheticImageSource:
    """Deterministic keyword-derived renderings; the no-network stand-in."""

    def __init__(self, seed: int = 0, side: int = imaging.DEFAULT_SIDE):
        self.seed = seed
        self.side = side

    def candidates(self, keyword: str, count: int, rng: Rng) -> list[tuple[str, np.ndarray]]:
        h = fnv1a64(keyword.encode("utf-8"))
        shape = imaging.SHAPE_PROTOTYPES[h % len(imaging.SHAPE_PROTOTYPES)]
        base_hue = (h >> 8) % 360
        out = []
        for i in range(count):
            img_rng = Rng(derive_seed(self.seed, "fams", keyword, i))
            hue = base_hue + img_rng.uniform(-10, 10)
            out.append((f"synthetic://{slugify(keyword)}/{i}", imaging.render_shape(shape, hue, img_rng, self.side)))
        return out


def load_image_file(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return imaging.read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


# ---------------------------------------------------------------------------
# Store


class FamsStore:
    def __init__(
        self,
        fams_dir: str | Path,
        corpus_store: CorpusStore,
        taxonomy: Taxonomy,
        seed: int = 0,
    ):
        self.dir = Path(fams_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "full").mkdir(exist_ok=True)
        self.log_path = self.dir / "tasks.jsonl"
        self.corpus_store = corpus_store
        self.taxonomy = taxonomy
        self.seed = seed
        self.tasks: dict[str, AnnotationTask] = {}
        self._replay()

    # -- event log -------------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            self._apply(json.loads(line), record=False)

    def _emit(self, event: dict) -> None:
        event = dict(event, timestamp=time.time())
        self._apply(event, record=True)

    def _apply(self, event: dict, record: bool) -> None:
        kind = event["event"]
        if kind == "task_created":
            task = AnnotationTask(
                id=event["task_id"],
                label=event["label"],
                keywords=list(event["keywords"]),
                requested_count=event["requested_count"],
                created_by=event["actor"],
            )
            self.tasks[task.id] = task
        else:
            task = self.tasks[event["task_id"]]
            if kind == "task_assigned":
                task.assignee = event["assignee"]
                task.status = "assigned"
            elif kind == "candidates_fetched":
                task.candidates = [
                    CandidateImage(**c) for c in event["candidates"]
                ]
                task.shortfall = event["shortfall"]
            elif kind == "selections_updated":
                by_id = {c.candidate_id: c for c in task.candidates}
                for cid, selected in event["selections"].items():
                    by_id[cid].selected = bool(selected)
            elif kind == "task_submitted":
                task.status = "submitted"
            elif kind == "task_confirmed":
                task.status = "confirmed"
                task.dataset_version = event["dataset_version"]
                task.error_note = None
            elif kind == "confirm_failed":
                task.error_note = event["error"]
            else:
                raise FamsError(f"unknown event {kind!r}")
            task.version += 1
        if record:
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event, separators=(",", ":")) + "\n")
                f.flush()

    # -- helpers ---------------------------------------------------------------

    def _task(self, task_id: str) -> AnnotationTask:
        if task_id not in self.tasks:
            raise FamsNotFoundError(f"unknown task {task_id!r}")
        return self.tasks[task_id]

    @staticmethod
    def _require_role(role: str, required: str, op: str) -> None:
        if role not in ROLES:
            raise FamsPermissionError(f"unknown role {role!r}")
        if role != required:
            raise FamsPermissionError(f"only the {required} may {op}")

    @staticmethod
    def _require_status(task: AnnotationTask, allowed: tuple[str, ...], op: str) -> None:
        if task.status not in allowed:
            raise FamsStateError(
                f"cannot {op} a task in state {task.status!r}"
            )

    def _check_stamp(self, task: AnnotationTask, expected_version: int | None) -> None:
        if expected_version is not None and expected_version != task.version:
            raise FamsConflictError(
                f"task version is {task.version}, caller expected {expected_version}"
            )

    # -- operations --------------------------------------------------------------

    def create_task(
        self, actor: str, role: str, keywords: list[str], count_per_keyword: int, label: str
    ) -> AnnotationTask:
        self._require_role(role, "manager", "create tasks")
        if not keywords or not all(k.strip() for k in keywords):
            raise FamsError("keywords must be a nonempty list of nonempty strings")
        if count_per_keyword < 1:
            raise FamsError("count_per_keyword must be >= 1")
        if label not in self.taxonomy.visual_foods:
            raise FamsError(f"unknown visual food label {label!r}")
        task_id = f"task_{len(self.tasks) + 1:04d}"
        self._emit(
            {
                "event": "task_created",
                "task_id": task_id,
                "actor": actor,
                "role": role,
                "keywords": list(keywords),
                "requested_count": count_per_keyword,
                "label": label,
            }
        )
        return self.tasks[task_id]

    def assign(self, actor: str, role: str, task_id: str, assignee: str,
               expected_version: int | None = None) -> AnnotationTask:
        self._require_role(role, "manager", "assign tasks")
        task = self._task(task_id)
        self._require_status(task, ("draft",), "assign")
        self._check_stamp(task, expected_version)
        self._emit(
            {
                "event": "task_assigned",
                "task_id": task_id,
                "actor": actor,
                "role": role,
                "assignee": assignee,
            }
        )
        return task

    def fetch_candidates(self, actor: str, role: str, task_id: str, source) -> AnnotationTask:
        """Populate the candidate list; atomic publish via one event.

        Candidates default to selected. If the source yields fewer images
        than requested the task is flagged (shortfall), not failed.
        """
        task = self._task(task_id)
        self._require_status(task, ("draft", "assigned"), "fetch candidates for")
        candidates: list[dict] = []
        requested_total = 0
        for keyword in task.keywords:
            requested_total += task.requested_count
            rng = Rng(derive_seed(self.seed, "fetch", task_id, keyword))
            for full_ref, pixels in source.candidates(keyword, task.requested_count, rng):
                cid = f"c{len(candidates):04d}"
                if full_ref.startswith("synthetic://"):
                    staged = self.dir / "full" / f"{task_id}_{cid}.ppm"
                    imaging.write_ppm(staged, pixels)
                    full_ref = str(staged)
                thumb = imaging.box_downsample(pixels, 8, 8)
                candidates.append(
                    {
                        "candidate_id": cid,
                        "source_keyword": keyword,
                        "full_ref": full_ref,
                        "thumbnail_b64": base64.b64encode(thumb.tobytes()).decode("ascii"),
                        "selected": True,
                    }
                )
        self._emit(
            {
                "event": "candidates_fetched",
                "task_id": task_id,
                "actor": actor,
                "role": role,
                "candidates": candidates,
                "shortfall": len(candidates) < requested_total,
            }
        )
        return task

    def annotate(
        self,
        actor: str,
        role: str,
        task_id: str,
        selections: dict[str, bool],
        expected_version: int | None = None,
    ) -> AnnotationTask:
        task = self._task(task_id)
        self._require_status(task, ("assigned",), "annotate")
        if actor != task.assignee:
            raise FamsPermissionError("only the assignee may update selections")
        self._check_stamp(task, expected_version)
        known = {c.candidate_id for c in task.candidates}
        unknown = set(selections) - known
        if unknown:
            raise FamsError(f"unknown candidate ids: {sorted(unknown)}")
        self._emit(
            {
                "event": "selections_updated",
                "task_id": task_id,
                "actor": actor,
                "role": role,
                "selections": {k: bool(v) for k, v in selections.items()},
            }
        )
        return task

    def submit(self, actor: str, role: str, task_id: str,
               expected_version: int | None = None) -> AnnotationTask:
        task = self._task(task_id)
        self._require_status(task, ("assigned",), "submit")
        if actor != task.assignee:
            raise FamsPermissionError("only the assignee may submit")
        self._check_stamp(task, expected_version)
        self._emit(
            {
                "event": "task_submitted",
                "task_id": task_id,
                "actor": actor,
                "role": role,
            }
        )
        return task

    def confirm(self, actor: str, role: str, task_id: str) -> tuple[AnnotationTask, int]:
        """Ingest selected candidates into a new dataset version.

        An unresolvable full-resolution ref aborts the ingest: the failure
        is logged with an error note and the task stays submitted.
        """
        self._require_role(role, "manager", "confirm tasks")
        task = self._task(task_id)
        self._require_status(task, ("submitted",), "confirm")
        selected = [c for c in task.candidates if c.selected]
        records: list[tuple[ManifestRecord, np.ndarray]] = []
        try:
            for cand in selected:
                pixels = load_image_file(cand.full_ref)
                image_id = f"{task_id}_{cand.candidate_id}"
                records.append(
                    (
                        ManifestRecord(
                            id=image_id,
                            label=task.label,
                            source="annotation",
                            path=f"images/{image_id}.ppm",
                        ),
                        pixels,
                    )
                )
        except (OSError, imaging.ImageError) as e:
            self._emit(
                {
                    "event": "confirm_failed",
                    "task_id": task_id,
                    "actor": actor,
                    "role": role,
                    "error": f"unresolvable full-resolution image: {e}",
                }
            )
            raise FamsError(f"confirm failed: {e}") from e
        base = self.corpus_store.latest_version()
        new_version = merge_annotations(self.corpus_store, base, records, self.taxonomy)
        self._emit(
            {
                "event": "task_confirmed",
                "task_id": task_id,
                "actor": actor,
                "role": role,
                "dataset_version": new_version.version,
                "ingested_count": len(records),
            }
        )
        return task, new_version.version

    def list_tasks(self, assignee: str | None = None) -> list[AnnotationTask]:
        tasks = sorted(self.tasks.values(), key=lambda t: t.id)
        if assignee is not None:
            tasks = [t for t in tasks if t.assignee == assignee]
        return tasks
