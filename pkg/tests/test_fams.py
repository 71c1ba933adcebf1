"""Annotation workflow: state machine, roles, conservation, determinism."""

import itertools

import pytest

from foodrec import imaging
from foodrec.corpus import (
    CorpusStore,
    SyntheticClassSpec,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
)
from foodrec.fams import (
    DirectoryImageSource,
    FamsConflictError,
    FamsError,
    FamsNotFoundError,
    FamsPermissionError,
    FamsStateError,
    FamsStore,
    SyntheticImageSource,
)
from foodrec.rng import Rng
from foodrec.taxonomy import Taxonomy

MANAGER = ("maria", "manager")
ANNOTATOR = ("anya", "annotator")
OTHER_ANNOTATOR = ("oleg", "annotator")


@pytest.fixture()
def env(tmp_path):
    tax = Taxonomy()
    cat = tax.add_super_category("Drinks")
    tax.add_food_item("Orange Juice", cat.id)
    store = CorpusStore(tmp_path / "corpus")
    spec = SyntheticCorpusSpec(
        classes=[SyntheticClassSpec("orange_juice", 5, "circle", 30.0)], seed=1
    )
    generate_synthetic_corpus(spec, store, tax)
    fams = FamsStore(tmp_path / "fams", store, tax, seed=3)
    return {"fams": fams, "store": store, "tax": tax, "tmp": tmp_path}


def advance_to(env, target, count=50):
    """Drive a fresh task to the target state along the only legal path."""
    fams: FamsStore = env["fams"]
    task = fams.create_task(*MANAGER, ["orange juice"], count, "orange_juice")
    if target == "draft":
        return task
    fams.assign(*MANAGER, task.id, ANNOTATOR[0])
    fams.fetch_candidates(*MANAGER, task.id, SyntheticImageSource(seed=7))
    if target == "assigned":
        return task
    fams.submit(ANNOTATOR[0], "annotator", task.id)
    if target == "submitted":
        return task
    fams.confirm(*MANAGER, task.id)
    return task


class TestCreation:
    def test_manager_creates_draft(self, env):
        task = env["fams"].create_task(*MANAGER, ["orange juice"], 50, "orange_juice")
        assert task.status == "draft"
        assert task.keywords == ["orange juice"]

    def test_annotator_cannot_create(self, env):
        with pytest.raises(FamsPermissionError):
            env["fams"].create_task(*ANNOTATOR, ["orange juice"], 50, "orange_juice")

    def test_empty_keywords_rejected(self, env):
        with pytest.raises(FamsError):
            env["fams"].create_task(*MANAGER, [], 50, "orange_juice")

    def test_unknown_label_rejected(self, env):
        with pytest.raises(FamsError):
            env["fams"].create_task(*MANAGER, ["x"], 5, "ghost_food")


class TestCandidates:
    def _dir_source(self, env, n_images):
        root = env["tmp"] / "source"
        folder = root / "orange_juice"
        folder.mkdir(parents=True)
        for i in range(n_images):
            imaging.write_ppm(
                folder / f"img_{i:03d}.ppm", imaging.render_shape("circle", 30.0, Rng(i))
            )
        return DirectoryImageSource(root)

    def test_directory_source_fills_request(self, env):
        source = self._dir_source(env, 60)
        task = env["fams"].create_task(*MANAGER, ["orange juice"], 50, "orange_juice")
        env["fams"].fetch_candidates(*MANAGER, task.id, source)
        assert len(task.candidates) == 50
        assert not task.shortfall
        assert all(c.selected for c in task.candidates)

    def test_exhausted_directory_flags_shortfall(self, env):
        source = self._dir_source(env, 20)
        task = env["fams"].create_task(*MANAGER, ["orange juice"], 50, "orange_juice")
        env["fams"].fetch_candidates(*MANAGER, task.id, source)
        assert len(task.candidates) == 20
        assert task.shortfall

    def test_missing_keyword_directory_is_empty_not_fatal(self, env):
        source = DirectoryImageSource(env["tmp"] / "nowhere")
        task = env["fams"].create_task(*MANAGER, ["orange juice"], 5, "orange_juice")
        env["fams"].fetch_candidates(*MANAGER, task.id, source)
        assert task.candidates == []
        assert task.shortfall

    def test_fetch_deterministic_for_seed(self, env, tmp_path):
        source = self._dir_source(env, 60)
        refs = []
        for run in range(2):
            fams = FamsStore(tmp_path / f"f{run}", env["store"], env["tax"], seed=11)
            task = fams.create_task(*MANAGER, ["orange juice"], 10, "orange_juice")
            fams.fetch_candidates(*MANAGER, task.id, source)
            refs.append([c.full_ref for c in task.candidates])
        assert refs[0] == refs[1]

    def test_thumbnails_are_8x8(self, env):
        import base64

        task = advance_to(env, "assigned", count=3)
        thumb = base64.b64decode(env["fams"].tasks[task.id].candidates[0].thumbnail_b64)
        assert len(thumb) == 8 * 8 * 3


class TestAnnotateSubmit:
    def test_uncheck_three_freeze_forty_seven(self, env):
        fams = env["fams"]
        task = fams.create_task(*MANAGER, ["orange juice"], 50, "orange_juice")
        fams.assign(*MANAGER, task.id, ANNOTATOR[0])
        fams.fetch_candidates(*MANAGER, task.id, SyntheticImageSource(seed=5))
        unchecked = {c.candidate_id: False for c in task.candidates[:3]}
        fams.annotate(ANNOTATOR[0], "annotator", task.id, unchecked, task.version)
        fams.submit(ANNOTATOR[0], "annotator", task.id)
        assert task.status == "submitted"
        assert task.selected_count() == 47

    def test_non_assignee_cannot_annotate(self, env):
        task = advance_to(env, "assigned")
        with pytest.raises(FamsPermissionError):
            env["fams"].annotate(OTHER_ANNOTATOR[0], "annotator", task.id, {}, None)

    def test_stale_version_rejected(self, env):
        task = advance_to(env, "assigned")
        with pytest.raises(FamsConflictError):
            env["fams"].annotate(ANNOTATOR[0], "annotator", task.id, {}, task.version + 5)

    def test_unknown_candidate_rejected(self, env):
        task = advance_to(env, "assigned")
        with pytest.raises(FamsError):
            env["fams"].annotate(ANNOTATOR[0], "annotator", task.id, {"ghost": True}, None)

    def test_double_submit_rejected(self, env):
        task = advance_to(env, "submitted")
        with pytest.raises(FamsStateError):
            env["fams"].submit(ANNOTATOR[0], "annotator", task.id)

    def test_annotate_after_submit_rejected(self, env):
        task = advance_to(env, "submitted")
        with pytest.raises(FamsStateError):
            env["fams"].annotate(ANNOTATOR[0], "annotator", task.id, {}, None)


class TestConfirm:
    def test_confirm_grows_dataset_by_selected_count(self, env):
        fams, store = env["fams"], env["store"]
        before = store.load_version(store.latest_version())
        task = fams.create_task(*MANAGER, ["orange juice"], 50, "orange_juice")
        fams.assign(*MANAGER, task.id, ANNOTATOR[0])
        fams.fetch_candidates(*MANAGER, task.id, SyntheticImageSource(seed=5))
        unchecked = {c.candidate_id: False for c in task.candidates[:3]}
        fams.annotate(ANNOTATOR[0], "annotator", task.id, unchecked, task.version)
        fams.submit(ANNOTATOR[0], "annotator", task.id)
        _, new_version = fams.confirm(*MANAGER, task.id)
        after = store.load_version(new_version)
        assert after.total_images == before.total_images + 47
        assert after.per_class_counts["orange_juice"] == before.per_class_counts["orange_juice"] + 47
        assert task.status == "confirmed"
        assert task.dataset_version == new_version

    def test_zero_selection_confirm_allowed(self, env):
        fams, store = env["fams"], env["store"]
        task = fams.create_task(*MANAGER, ["orange juice"], 4, "orange_juice")
        fams.assign(*MANAGER, task.id, ANNOTATOR[0])
        fams.fetch_candidates(*MANAGER, task.id, SyntheticImageSource(seed=5))
        all_off = {c.candidate_id: False for c in task.candidates}
        fams.annotate(ANNOTATOR[0], "annotator", task.id, all_off, task.version)
        fams.submit(ANNOTATOR[0], "annotator", task.id)
        before_total = store.load_version(store.latest_version()).total_images
        _, new_version = fams.confirm(*MANAGER, task.id)
        assert store.load_version(new_version).total_images == before_total

    def test_annotator_cannot_confirm(self, env):
        task = advance_to(env, "submitted")
        with pytest.raises(FamsPermissionError):
            env["fams"].confirm(*ANNOTATOR, task.id)

    def test_unresolvable_ref_returns_task_to_submitted(self, env):
        import os

        fams = env["fams"]
        task = advance_to(env, "submitted", count=4)
        victim = fams.tasks[task.id].candidates[0]
        os.unlink(victim.full_ref)
        with pytest.raises(FamsError):
            fams.confirm(*MANAGER, task.id)
        assert task.status == "submitted"
        assert "unresolvable" in task.error_note


class TestStateMachine:
    OPS = ("assign", "annotate", "submit", "confirm")
    LEGAL = {
        ("draft", "manager", "assign"),
        ("assigned", "annotator", "annotate"),
        ("assigned", "annotator", "submit"),
        ("submitted", "manager", "confirm"),
    }

    def _attempt(self, env, task, actor, role, op):
        fams = env["fams"]
        if op == "assign":
            fams.assign(actor, role, task.id, ANNOTATOR[0])
        elif op == "annotate":
            fams.annotate(actor, role, task.id, {}, None)
        elif op == "submit":
            fams.submit(actor, role, task.id)
        else:
            fams.confirm(actor, role, task.id)

    def test_every_illegal_state_actor_op_triple_rejected(self, env):
        """Exhaustive scan over (state, actor, op); only the four legal
        triples may succeed, and confirmed is terminal."""
        actors = [MANAGER, ANNOTATOR, OTHER_ANNOTATOR]
        for state, (actor, role), op in itertools.product(
            ("draft", "assigned", "submitted", "confirmed"), actors, self.OPS
        ):
            task = advance_to(env, state, count=3)
            legal = (state, role, op) in self.LEGAL and actor != OTHER_ANNOTATOR[0]
            if legal:
                self._attempt(env, task, actor, role, op)
            else:
                with pytest.raises(FamsError):
                    self._attempt(env, task, actor, role, op)

    def test_confirmed_unreachable_without_submit(self, env):
        task = advance_to(env, "assigned")
        with pytest.raises(FamsStateError):
            env["fams"].confirm(*MANAGER, task.id)

    def test_unknown_task_rejected(self, env):
        with pytest.raises(FamsNotFoundError):
            env["fams"].submit(ANNOTATOR[0], "annotator", "task_9999")


class TestEventLog:
    def test_replay_reconstructs_state(self, env, tmp_path):
        fams = env["fams"]
        task = advance_to(env, "submitted", count=5)
        reloaded = FamsStore(fams.dir, env["store"], env["tax"], seed=3)
        copy = reloaded.tasks[task.id]
        assert copy.status == "submitted"
        assert copy.selected_count() == task.selected_count()
        assert copy.version == task.version

    def test_every_event_records_actor_and_role(self, env):
        import json

        advance_to(env, "confirmed", count=3)
        events = [
            json.loads(line)
            for line in env["fams"].log_path.read_text().splitlines()
        ]
        required_role = {
            "task_created": "manager",
            "task_assigned": "manager",
            "task_confirmed": "manager",
            "task_submitted": "annotator",
            "selections_updated": "annotator",
        }
        for event in events:
            assert event["actor"]
            assert event["role"] in ("manager", "annotator")
            if event["event"] in required_role:
                assert event["role"] == required_role[event["event"]]
