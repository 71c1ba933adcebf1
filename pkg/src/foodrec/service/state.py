"""Process-wide service state: loaded checkpoint, key store, logs, FAMS.

The checkpoint is immutable for the process lifetime (hot swap = restart).
Inference is lock-free across request handlers; query/feedback log appends
and qid generation serialize through small locks. Query images and records
are persisted before the response is returned; a crash hook between
persistence and response exists for fault-injection tests.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse, unquote

import httpx
import numpy as np

from .. import imaging
from ..config import AppConfig
from ..corpus import CorpusStore
from ..fams import DirectoryImageSource, FamsStore, SyntheticImageSource
from ..keys import KeyStore
from ..model.checkpoint import (
    CheckpointError,
    load_checkpoint,
    normalize_batch,
    require_serving_label_space,
)
from ..model.losses import softmax
from ..model.network import Network
from ..rng import Rng, derive_seed
from ..taxonomy import NON_FOOD_ID, Taxonomy


class ServiceError(Exception):
    """Carries the wire status code and message for error responses."""

    def __init__(self, status_code: int, status_msg: str):
        super().__init__(status_msg)
        self.status_code = status_code
        self.status_msg = status_msg


@dataclass
class ClassifyOutcome:
    food_result: list[dict]
    food_results_by_category: list[dict]
    non_food: bool
    time_cost: float


class ServiceState:
    def __init__(self, config: AppConfig):
        self.config = config
        self.taxonomy = Taxonomy.load(config.taxonomy_path)
        self.checkpoint = load_checkpoint(config.checkpoint_path)
        require_serving_label_space(self.checkpoint)

        # Checkpoints are never rewritten after taxonomy merges; stale labels
        # resolve through the remap log at serving time instead.
        self.serving_labels = [
            self.taxonomy.apply_remap(label) for label in self.checkpoint.label_space
        ]
        self._network = Network(self.checkpoint.config)
        self._params = self._network.unflatten(self.checkpoint.params)

        self.keys = KeyStore(config.keys_path, seed=config.seed)
        self.corpus_store = CorpusStore(config.corpus_root)
        self.fams = FamsStore(
            config.fams_dir, self.corpus_store, self.taxonomy, seed=config.seed
        )
        self.fams_source = self._build_fams_source()

        config.logs_dir.mkdir(parents=True, exist_ok=True)
        config.query_images_dir.mkdir(parents=True, exist_ok=True)
        self._log_lock = threading.Lock()
        self._qid_lock = threading.Lock()
        self._qid_rng = Rng(derive_seed(config.seed, "qid"))
        self._qid_counter = 0
        self._known_qids = self._load_known_qids()

        self.crash_after_persist = None  # fault-injection hook for tests

    def _build_fams_source(self):
        source = self.config.fams_source
        if source.get("type") == "directory":
            return DirectoryImageSource(source["root"])
        return SyntheticImageSource(seed=self.config.seed)

    def _load_known_qids(self) -> set[str]:
        qids = set()
        if self.config.query_log_path.exists():
            for line in self.config.query_log_path.read_text(encoding="utf-8").splitlines():
                qids.add(json.loads(line)["qid"])
        return qids

    # -- qid ---------------------------------------------------------------------

    def next_qid(self) -> str:
        """32-hex-char id: PRNG stream seeded per process, counter mixed in."""
        with self._qid_lock:
            self._qid_counter += 1
            a, b = self._qid_rng.next_u64(), self._qid_rng.next_u64()
            return f"{a ^ self._qid_counter:016x}{b:016x}"

    # -- image intake -------------------------------------------------------------

    def fetch_image_url(self, url: str) -> bytes:
        parsed = urlparse(url)
        if parsed.scheme == "file":
            path = Path(unquote(parsed.path))
            try:
                return path.read_bytes()
            except OSError as e:
                raise ServiceError(502, f"cannot read image url: {e}") from e
        if parsed.scheme in ("http", "https"):
            try:
                resp = httpx.get(url, timeout=5.0, follow_redirects=True)
                resp.raise_for_status()
                return resp.content
            except httpx.HTTPError as e:
                raise ServiceError(502, f"cannot fetch image url: {e}") from e
        raise ServiceError(400, f"unsupported image url scheme {parsed.scheme!r}")

    @staticmethod
    def decode_image(data: bytes) -> np.ndarray:
        """PNG or binary PPM bytes to (H, W, 3) uint8."""
        if data.startswith(b"P6"):
            try:
                return imaging.decode_ppm(data)
            except imaging.ImageError as e:
                raise ServiceError(422, f"undecodable image: {e}") from e
        if data.startswith(b"\x89PNG"):
            from PIL import Image, UnidentifiedImageError

            try:
                with Image.open(io.BytesIO(data)) as im:
                    return np.asarray(im.convert("RGB"), dtype=np.uint8)
            except (UnidentifiedImageError, OSError) as e:
                raise ServiceError(422, f"undecodable image: {e}") from e
        raise ServiceError(422, "undecodable image: expected PNG or P6 PPM bytes")

    @staticmethod
    def decode_base64_field(value: str) -> bytes:
        try:
            return base64.b64decode(value, validate=True)
        except (ValueError, TypeError) as e:
            raise ServiceError(400, f"image field is not valid base64: {e}") from e

    # -- classification -------------------------------------------------------------

    def classify_pixels(self, pixels: np.ndarray) -> ClassifyOutcome:
        h, w, _ = self.checkpoint.config.input_shape
        if pixels.shape[:2] != (h, w):
            pixels = imaging.resize_nearest(pixels, h, w)

        started = time.perf_counter()
        logits, _ = self._network.forward(normalize_batch(pixels), self._params)
        time_cost = time.perf_counter() - started

        probs = softmax(logits)[0]
        merged: dict[str, float] = {}
        for label, p in zip(self.serving_labels, probs):
            merged[label] = merged.get(label, 0.0) + float(p)

        ranked = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))
        if self.config.non_food_threshold is not None:
            non_food = merged.get(NON_FOOD_ID, 0.0) >= self.config.non_food_threshold
        else:
            non_food = ranked[0][0] == NON_FOOD_ID

        food_result = [
            {"name": name, "score": score}
            for name, score in ranked
            if name != NON_FOOD_ID
        ][:10]

        categories: dict[str, float] = {}
        for name, score in merged.items():
            if name == NON_FOOD_ID:
                continue
            vf = self.taxonomy.visual_foods[name]
            cats = sorted(
                {
                    self.taxonomy.food_items[item].super_category_id
                    for item in vf.member_item_ids
                }
            )
            for cat in cats:
                categories[cat] = categories.get(cat, 0.0) + score / len(cats)
        by_category = [
            {"name": name, "score": score}
            for name, score in sorted(categories.items(), key=lambda kv: (-kv[1], kv[0]))
        ][:10]

        return ClassifyOutcome(food_result, by_category, non_food, time_cost)

    # -- persistence ------------------------------------------------------------------

    def persist_query(
        self, qid: str, api_key: str, pixels: np.ndarray, response: dict
    ) -> None:
        """Image first, then the replayable query record; both before the response."""
        image_path = self.config.query_images_dir / f"{qid}.ppm"
        imaging.write_ppm(image_path, pixels)
        record = {
            "qid": qid,
            "timestamp": time.time(),
            "api_key": api_key,
            "image_ref": str(image_path),
            "response": response,
        }
        with self._log_lock:
            with open(self.config.query_log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, separators=(",", ":")) + "\n")
                f.flush()
            self._known_qids.add(qid)

    def qid_exists(self, qid: str) -> bool:
        with self._log_lock:
            return qid in self._known_qids

    def persist_feedback(self, qid: str, chosen_label: str, challenge_tag: str | None) -> None:
        record = {
            "qid": qid,
            "chosen_label": chosen_label,
            "challenge_tag": challenge_tag,
            "timestamp": time.time(),
        }
        with self._log_lock:
            with open(self.config.feedback_log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, separators=(",", ":")) + "\n")
                f.flush()

    # -- auth ------------------------------------------------------------------------

    def require_approved_key(self, api_key: str | None) -> str:
        if not api_key:
            raise ServiceError(401, "missing api_key")
        record = self.keys.get(api_key)
        if record is None:
            raise ServiceError(401, "unknown api_key")
        if record.status != "approved":
            raise ServiceError(401, f"api_key is {record.status}, not approved")
        return api_key

    def fams_role(self, api_key: str | None) -> str:
        self.require_approved_key(api_key)
        role = self.config.fams_roles.get(api_key)
        if role is None:
            raise ServiceError(403, "api_key has no annotation role")
        return role
