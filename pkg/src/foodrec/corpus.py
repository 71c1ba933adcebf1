"""Versioned labeled image corpus: synthetic generation, splits, annotation merges.

Storage layout under a corpus root:

    images/<image_id>.ppm                 binary P6 pixel files
    versions/v0001.manifest.jsonl         one canonical JSON line per image
    versions/v0001.meta.json              version number, digest, class counts

Manifest lines are canonical (fixed key order, no whitespace) so the
version digest -- SHA-256 over the concatenated lines -- is reproducible
across platforms. Versions are immutable: a merge writes a new manifest
containing the old lines plus the new ones, and old versions stay readable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .rng import Rng, derive_seed
from .taxonomy import NON_FOOD_ID, Taxonomy

SOURCES = ("synthetic", "annotation", "external")


class CorpusError(ValueError):
    pass


@dataclass
class ManifestRecord:
    """One corpus image: identity and label; pixels live in the PPM file."""

    id: str
    label: str
    source: str
    path: str

    def canonical_line(self) -> str:
        return json.dumps(
            {"id": self.id, "label": self.label, "source": self.source, "path": self.path},
            separators=(",", ":"),
        )


@dataclass
class DatasetVersion:
    version: int
    manifest_digest: str
    per_class_counts: dict[str, int]

    @property
    def total_images(self) -> int:
        return sum(self.per_class_counts.values())


@dataclass
class SplitSpec:
    train: float = 0.7
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        for f in (self.train, self.val, self.test):
            if not 0.0 < f < 1.0:
                raise CorpusError("split fractions must be in (0, 1)")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise CorpusError("split fractions must sum to 1")


@dataclass
class SyntheticClassSpec:
    visual_food_id: str
    count: int
    shape: str
    base_hue: float
    hue_jitter: float = 12.0


@dataclass
class SyntheticCorpusSpec:
    classes: list[SyntheticClassSpec]
    seed: int = 0
    non_food_count: int = 0
    confusable_pairs: list[tuple[str, str]] = field(default_factory=list)
    side: int = imaging.DEFAULT_SIDE

    def validate(self) -> None:
        if not self.classes:
            raise CorpusError("corpus spec needs at least one class")
        ids = [c.visual_food_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate class ids in corpus spec")
        for c in self.classes:
            if c.count < 1:
                raise CorpusError(f"class {c.visual_food_id!r} needs count >= 1")
            if c.shape not in imaging.SHAPE_PROTOTYPES:
                raise CorpusError(f"class {c.visual_food_id!r} has unknown shape {c.shape!r}")
            if c.hue_jitter < 0:
                raise CorpusError("hue_jitter must be >= 0")
        by_id = {c.visual_food_id: c for c in self.classes}
        for a, b in self.confusable_pairs:
            if a not in by_id or b not in by_id:
                raise CorpusError(f"confusable pair ({a!r}, {b!r}) references unknown classes")
            ca, cb = by_id[a], by_id[b]
            if ca.shape != cb.shape:
                raise CorpusError(f"confusable pair ({a!r}, {b!r}) must share a shape prototype")
            if abs(ca.base_hue - cb.base_hue) > ca.hue_jitter + cb.hue_jitter:
                raise CorpusError(
                    f"confusable pair ({a!r}, {b!r}) hue ranges do not overlap"
                )


class CorpusStore:
    """Owns the on-disk corpus; one writer, any number of version readers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "images").mkdir(parents=True, exist_ok=True)
        (self.root / "versions").mkdir(parents=True, exist_ok=True)

    # -- paths ---------------------------------------------------------------

    def image_path(self, image_id: str) -> Path:
        return self.root / "images" / f"{image_id}.ppm"

    def _manifest_path(self, version: int) -> Path:
        return self.root / "versions" / f"v{version:04d}.manifest.jsonl"

    def _meta_path(self, version: int) -> Path:
        return self.root / "versions" / f"v{version:04d}.meta.json"

    # -- reading ---------------------------------------------------------------

    def versions(self) -> list[int]:
        return sorted(
            int(p.name[1:5]) for p in (self.root / "versions").glob("v*.meta.json")
        )

    def latest_version(self) -> int:
        versions = self.versions()
        if not versions:
            raise CorpusError("corpus store has no versions yet")
        return versions[-1]

    def load_version(self, version: int) -> DatasetVersion:
        meta_path = self._meta_path(version)
        if not meta_path.exists():
            raise CorpusError(f"unknown dataset version {version}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return DatasetVersion(
            version=meta["version"],
            manifest_digest=meta["manifest_digest"],
            per_class_counts=dict(meta["per_class_counts"]),
        )

    def manifest_records(self, version: int) -> list[ManifestRecord]:
        path = self._manifest_path(version)
        if not path.exists():
            raise CorpusError(f"unknown dataset version {version}")
        records = []
        for line in path.read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            records.append(ManifestRecord(obj["id"], obj["label"], obj["source"], obj["path"]))
        return records

    def load_pixels(self, image_id: str) -> np.ndarray:
        return imaging.read_ppm(self.image_path(image_id))

    def recompute_digest(self, version: int) -> str:
        return _digest_lines(
            r.canonical_line() for r in self.manifest_records(version)
        )

    def class_histogram(self, version: int) -> dict[str, int]:
        """Recount labels from the manifest; equals the stored per-class counts."""
        counts: dict[str, int] = {}
        for rec in self.manifest_records(version):
            counts[rec.label] = counts.get(rec.label, 0) + 1
        return counts

    # -- writing ---------------------------------------------------------------

    def create_version(
        self,
        new_records: list[tuple[ManifestRecord, np.ndarray]],
        base_version: int | None = None,
        taxonomy: Taxonomy | None = None,
    ) -> DatasetVersion:
        """Write a new immutable version = base manifest + new records."""
        base_records: list[ManifestRecord] = (
            self.manifest_records(base_version) if base_version is not None else []
        )
        existing_ids = {r.id for r in base_records}
        for rec, _ in new_records:
            if rec.id in existing_ids:
                raise CorpusError(f"duplicate image id {rec.id!r}")
            existing_ids.add(rec.id)
            if rec.source not in SOURCES:
                raise CorpusError(f"unknown image source {rec.source!r}")
            if taxonomy is not None and rec.label not in taxonomy.visual_foods:
                raise CorpusError(f"label {rec.label!r} is not a known visual food")

        version = (self.versions()[-1] + 1) if self.versions() else 1
        for rec, pixels in new_records:
            imaging.write_ppm(self.image_path(rec.id), pixels)

        all_records = base_records + [rec for rec, _ in new_records]
        lines = [r.canonical_line() for r in all_records]
        digest = _digest_lines(lines)
        counts: dict[str, int] = {}
        for rec in all_records:
            counts[rec.label] = counts.get(rec.label, 0) + 1

        self._manifest_path(version).write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8"
        )
        meta = {
            "version": version,
            "manifest_digest": digest,
            "per_class_counts": {k: counts[k] for k in sorted(counts)},
        }
        self._meta_path(version).write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
        return DatasetVersion(version, digest, meta["per_class_counts"])


def _digest_lines(lines) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Operations


def generate_synthetic_corpus(
    spec: SyntheticCorpusSpec,
    store: CorpusStore,
    taxonomy: Taxonomy | None = None,
) -> DatasetVersion:
    """Render the spec's classes into a fresh dataset version.

    Every image draws from its own (seed, class, index) substream, so the
    same spec and seed reproduce identical pixel files and an identical
    manifest digest regardless of generation order.
    """
    spec.validate()
    records: list[tuple[ManifestRecord, np.ndarray]] = []
    for cls in spec.classes:
        for i in range(cls.count):
            rng = Rng(derive_seed(spec.seed, cls.visual_food_id, i))
            hue = cls.base_hue + rng.uniform(-cls.hue_jitter, cls.hue_jitter)
            pixels = imaging.render_shape(cls.shape, hue, rng, side=spec.side)
            image_id = f"{cls.visual_food_id}_{i:05d}"
            rec = ManifestRecord(
                id=image_id,
                label=cls.visual_food_id,
                source="synthetic",
                path=f"images/{image_id}.ppm",
            )
            records.append((rec, pixels))
    for i in range(spec.non_food_count):
        rng = Rng(derive_seed(spec.seed, NON_FOOD_ID, i))
        pixels = imaging.render_non_food(i, rng, side=spec.side)
        image_id = f"{NON_FOOD_ID}_{i:05d}"
        rec = ManifestRecord(
            id=image_id,
            label=NON_FOOD_ID,
            source="synthetic",
            path=f"images/{image_id}.ppm",
        )
        records.append((rec, pixels))
    return store.create_version(records, taxonomy=taxonomy)


def stratified_split(
    store: CorpusStore, version: int, spec: SplitSpec
) -> dict[str, list[str]]:
    """Per-class, deterministic train/val/test id lists.

    Each class's ids are shuffled with a class-specific substream, then
    allocated by the largest-remainder rule: every split gets floor(f*n)
    and leftover images go to the splits with the largest fractional parts
    (ties broken train, val, test). The per-split count therefore deviates
    from fraction*count by less than 1.
    """
    spec.validate()
    by_class: dict[str, list[str]] = {}
    for rec in store.manifest_records(version):
        by_class.setdefault(rec.label, []).append(rec.id)

    splits: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    fractions = [("train", spec.train), ("val", spec.val), ("test", spec.test)]
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < 3:
            raise CorpusError(
                f"class {label!r} has {len(ids)} images; need >= 3 to stratify"
            )
        rng = Rng(derive_seed(spec.seed, "split", label))
        rng.shuffle(ids)
        n = len(ids)
        base = [int(f * n) for _, f in fractions]
        remainders = [f * n - b for (_, f), b in zip(fractions, base)]
        leftover = n - sum(base)
        order = sorted(range(3), key=lambda i: (-remainders[i], i))
        for i in order[:leftover]:
            base[i] += 1
        offset = 0
        for (name, _), take in zip(fractions, base):
            splits[name].extend(ids[offset : offset + take])
            offset += take
    return splits


def merge_annotations(
    store: CorpusStore,
    version: int,
    confirmed_records: list[tuple[ManifestRecord, np.ndarray]],
    taxonomy: Taxonomy,
) -> DatasetVersion:
    """Fold confirmed annotation images into a new dataset version."""
    store.load_version(version)  # raises on unknown version
    return store.create_version(
        confirmed_records, base_version=version, taxonomy=taxonomy
    )
