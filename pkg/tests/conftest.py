"""Shared fixtures: a small 3-class corpus, an overfit checkpoint, and a
service client wired to them. Training happens once per session; service
tests get their own storage copy so log and corpus writes cannot leak
between tests.
"""

from __future__ import annotations

import base64
import shutil

import pytest
from fastapi.testclient import TestClient

from foodrec.config import AppConfig
from foodrec.corpus import (
    CorpusStore,
    SplitSpec,
    SyntheticClassSpec,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    stratified_split,
)
from foodrec.keys import KeyStore
from foodrec.model.checkpoint import save_checkpoint
from foodrec.model.training import TrainConfig
from foodrec.pipeline import train_on_version
from foodrec.service.app import create_app
from foodrec.service.state import ServiceState
from foodrec.taxonomy import Taxonomy


def make_small_taxonomy() -> Taxonomy:
    tax = Taxonomy()
    drinks = tax.add_super_category("Drinks")
    noodles = tax.add_super_category("Noodles")
    tax.add_food_item("Kopi", drinks.id)
    tax.add_food_item("Laksa", noodles.id)
    tax.add_food_item("Mee Rebus", noodles.id)
    return tax


SMALL_CLASSES = [
    SyntheticClassSpec("kopi", 30, "stripes", 210.0, 8.0),
    SyntheticClassSpec("laksa", 30, "circle", 150.0, 8.0),
    SyntheticClassSpec("mee_rebus", 30, "square", 30.0, 8.0),
]


@pytest.fixture(scope="session")
def trained_env(tmp_path_factory):
    """Corpus + taxonomy + overfit checkpoint shared by service-level tests."""
    root = tmp_path_factory.mktemp("env")
    config = AppConfig(
        storage_root=str(root / "storage"),
        checkpoint_path=str(root / "storage" / "model.ckpt"),
        seed=5,
    )
    config.storage.mkdir(parents=True)
    taxonomy = make_small_taxonomy()
    taxonomy.save(config.taxonomy_path)

    store = CorpusStore(config.corpus_root)
    spec = SyntheticCorpusSpec(classes=list(SMALL_CLASSES), seed=2, non_food_count=20)
    generate_synthetic_corpus(spec, store, taxonomy)
    splits = stratified_split(store, 1, SplitSpec(0.8, 0.1, 0.1, seed=1))
    ckpt, history = train_on_version(
        store, taxonomy, 1, splits, TrainConfig(epochs=6, seed=3)
    )
    assert history[-1].val_top1 >= 0.9, "fixture model failed to overfit"
    save_checkpoint(ckpt, config.checkpoint_path)
    return {
        "config": config,
        "taxonomy": taxonomy,
        "store": store,
        "splits": splits,
        "checkpoint": ckpt,
    }


@pytest.fixture()
def service_env(trained_env, tmp_path):
    """Fresh service over a private copy of the trained storage."""
    base: AppConfig = trained_env["config"]
    storage = tmp_path / "storage"
    shutil.copytree(base.storage_root, storage)
    config = AppConfig(
        storage_root=str(storage),
        checkpoint_path=str(storage / "model.ckpt"),
        seed=9,
    )

    keys = KeyStore(config.keys_path, seed=config.seed)
    approved = keys.register("Approved Org")
    keys.approve(approved.key)
    pending = keys.register("Pending Org")
    manager = keys.register("Managers")
    keys.approve(manager.key)
    annotator = keys.register("Annotators")
    keys.approve(annotator.key)
    config.fams_roles = {manager.key: "manager", annotator.key: "annotator"}

    state = ServiceState(config)
    client = TestClient(create_app(config, state=state), raise_server_exceptions=False)
    return {
        "client": client,
        "state": state,
        "config": config,
        "approved": approved.key,
        "pending": pending.key,
        "manager": manager.key,
        "annotator": annotator.key,
        "store": CorpusStore(config.corpus_root),
        "taxonomy": trained_env["taxonomy"],
    }


def image_b64(store: CorpusStore, image_id: str) -> str:
    return base64.b64encode(store.image_path(image_id).read_bytes()).decode("ascii")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(report, "when", "call") == "call" or outcome == "error":
                results[nodeid.split("::")[-1]] = outcome
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in results.items():
            status = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{status}: {name}")
