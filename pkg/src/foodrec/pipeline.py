"""Compositions of corpus + model + evaluation used by the CLI and tests.

Also home of the standard 12-class benchmark spec: counts span 15 to 200
(the same ~13x max/min imbalance the production corpus suffers from) with
two rare/common confusable pairs sharing a shape and overlapping hues.
"""

from __future__ import annotations

import numpy as np

from .corpus import (
    CorpusStore,
    SplitSpec,
    SyntheticClassSpec,
    SyntheticCorpusSpec,
    stratified_split,
)
from .evaluation import EvalReport, evaluate
from .model.checkpoint import ModelCheckpoint
from .model.losses import FocalLossConfig, inverse_frequency_alpha
from .model.network import ModelConfig, default_model_config
from .model.training import EpochMetrics, TrainConfig, train
from .taxonomy import Taxonomy

STANDARD_CLASSES = [
    # (name, super category, count, shape, base hue)
    ("Mee Kuah", "Noodles", 15, "circle", 18.0),
    ("Mee Rebus", "Noodles", 200, "circle", 38.0),
    ("Laksa", "Noodles", 90, "circle", 150.0),
    ("Nasi Goreng", "Rice", 20, "square", 120.0),
    ("Nasi Lemak", "Rice", 180, "square", 140.0),
    ("Kaya Toast", "Bread", 60, "square", 40.0),
    ("Satay", "Grilled", 120, "triangle", 25.0),
    ("Char Kway Teow", "Noodles", 45, "triangle", 275.0),
    ("Popiah", "Snacks", 70, "triangle", 90.0),
    ("Teh Tarik", "Drinks", 150, "stripes", 35.0),
    ("Kopi O", "Drinks", 25, "stripes", 210.0),
    ("Bandung", "Drinks", 100, "stripes", 320.0),
]

STANDARD_CONFUSABLE_PAIRS = [
    ("mee_kuah", "mee_rebus"),
    ("nasi_goreng", "nasi_lemak"),
]


def standard_spec_dict(seed: int = 0) -> dict:
    """The benchmark corpus as the JSON shape `gen-corpus --spec` consumes."""
    return {
        "seed": seed,
        "non_food_count": 60,
        "hue_jitter": 12.0,
        "classes": [
            {
                "name": name,
                "super_category": category,
                "count": count,
                "shape": shape,
                "base_hue": hue,
            }
            for name, category, count, shape, hue in STANDARD_CLASSES
        ],
        "confusable_pairs": [list(pair) for pair in STANDARD_CONFUSABLE_PAIRS],
    }


def build_taxonomy_for_spec(spec_dict: dict, taxonomy: Taxonomy | None = None) -> Taxonomy:
    """Ensure every spec class exists as item + singleton visual food."""
    tax = taxonomy if taxonomy is not None else Taxonomy()
    categories = {c.name: c for c in tax.super_categories.values()}
    existing_names = {vf.name for vf in tax.visual_foods.values()}
    for cls in spec_dict["classes"]:
        cat_name = cls.get("super_category", "Uncategorized")
        if cat_name not in categories:
            categories[cat_name] = tax.add_super_category(cat_name)
        if cls["name"] not in existing_names:
            tax.add_food_item(cls["name"], categories[cat_name].id)
            existing_names.add(cls["name"])
    return tax


def corpus_spec_from_dict(spec_dict: dict, taxonomy: Taxonomy) -> SyntheticCorpusSpec:
    by_name = {vf.name: vf.id for vf in taxonomy.visual_foods.values()}
    default_jitter = float(spec_dict.get("hue_jitter", 12.0))
    classes = [
        SyntheticClassSpec(
            visual_food_id=by_name[cls["name"]],
            count=int(cls["count"]),
            shape=cls["shape"],
            base_hue=float(cls["base_hue"]),
            hue_jitter=float(cls.get("hue_jitter", default_jitter)),
        )
        for cls in spec_dict["classes"]
    ]
    return SyntheticCorpusSpec(
        classes=classes,
        seed=int(spec_dict.get("seed", 0)),
        non_food_count=int(spec_dict.get("non_food_count", 0)),
        confusable_pairs=[tuple(p) for p in spec_dict.get("confusable_pairs", [])],
    )


# ---------------------------------------------------------------------------
# Array assembly and train/eval wrappers


def load_split_arrays(
    store: CorpusStore, version: int, ids: list[str], label_space: list[str]
) -> tuple[np.ndarray, np.ndarray]:
    labels_by_id = {r.id: r.label for r in store.manifest_records(version)}
    index = {label: i for i, label in enumerate(label_space)}
    images = np.stack([store.load_pixels(i) for i in ids])
    labels = np.array([index[labels_by_id[i]] for i in ids], dtype=np.int64)
    return images, labels


def resolve_alpha(
    store: CorpusStore, version: int, label_space: list[str], mode: str
) -> np.ndarray | None:
    if mode == "uniform":
        return None
    if mode == "inverse_frequency":
        return inverse_frequency_alpha(store.class_histogram(version), label_space)
    raise ValueError(f"unknown alpha mode {mode!r}")


def train_on_version(
    store: CorpusStore,
    taxonomy: Taxonomy,
    version: int,
    splits: dict[str, list[str]],
    train_config: TrainConfig,
    model_config: ModelConfig | None = None,
    alpha_mode: str = "uniform",
) -> tuple[ModelCheckpoint, list[EpochMetrics]]:
    label_space = taxonomy.label_space()
    if model_config is None:
        side = store.load_pixels(splits["train"][0]).shape[0] if splits["train"] else 32
        model_config = default_model_config(len(label_space), input_side=side)
    if train_config.loss == "focal" and train_config.focal is None:
        train_config.focal = FocalLossConfig(
            gamma=2.0, alpha=resolve_alpha(store, version, label_space, alpha_mode)
        )
    train_x, train_y = load_split_arrays(store, version, splits["train"], label_space)
    if splits.get("val"):
        val_x, val_y = load_split_arrays(store, version, splits["val"], label_space)
    else:
        val_x = np.zeros((0,) + tuple(model_config.input_shape), dtype=np.uint8)
        val_y = np.zeros(0, dtype=np.int64)
    metadata = {"dataset_version": version}
    return train(
        train_x, train_y, val_x, val_y, model_config, train_config, label_space, metadata
    )


def evaluate_on_split(
    store: CorpusStore,
    ckpt: ModelCheckpoint,
    version: int,
    ids: list[str],
) -> EvalReport:
    images, labels = load_split_arrays(store, version, ids, ckpt.label_space)
    return evaluate(ckpt, images, labels, dataset_version=version)


def make_standard_splits(store: CorpusStore, version: int, seed: int) -> dict[str, list[str]]:
    return stratified_split(store, version, SplitSpec(0.7, 0.15, 0.15, seed=seed))
