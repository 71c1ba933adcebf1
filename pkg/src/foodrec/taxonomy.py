"""Three-level label hierarchy: super category -> food item -> visual food.

The model's label space is the set of visual foods: groups of food items
that cannot be told apart from pixels alone (coffee with/without sugar).
A permanent non-food sentinel class exists from initialization and can
never be merged or deleted. Merges that retire a visual food id record an
entry in ``remap_log`` so corpora and checkpoints labeled with the old id
can be relabeled at evaluation/serving time instead of being rewritten.

All mutations go through one owner object (single-writer); ``snapshot()``
returns an immutable copy safe to hand to other threads.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

NON_FOOD_ID = "non_food"
NON_FOOD_NAME = "Non-Food"


class TaxonomyError(ValueError):
    pass


def slugify(name: str) -> str:
    """Lowercase snake_case slug: 'Mee Kuah' -> 'mee_kuah'."""
    slug = re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")
    if not slug:
        raise TaxonomyError(f"name {name!r} does not yield a usable slug")
    return slug


@dataclass
class SuperCategory:
    id: str
    name: str


@dataclass
class FoodItem:
    id: str
    name: str
    super_category_id: str
    visual_food_id: str


@dataclass
class VisualFood:
    id: str
    name: str
    member_item_ids: set[str] = field(default_factory=set)
    is_non_food: bool = False


class Taxonomy:
    def __init__(self):
        self.super_categories: dict[str, SuperCategory] = {}
        self.food_items: dict[str, FoodItem] = {}
        self.visual_foods: dict[str, VisualFood] = {}
        self.remap_log: list[dict[str, str]] = []
        self.visual_foods[NON_FOOD_ID] = VisualFood(
            id=NON_FOOD_ID, name=NON_FOOD_NAME, is_non_food=True
        )

    # -- super categories ---------------------------------------------------

    def add_super_category(self, name: str) -> SuperCategory:
        if any(c.name == name for c in self.super_categories.values()):
            raise TaxonomyError(f"duplicate super category name {name!r}")
        cat = SuperCategory(id=self._fresh_id(slugify(name), self.super_categories), name=name)
        self.super_categories[cat.id] = cat
        return cat

    # -- items and visual foods ---------------------------------------------

    def add_food_item(
        self, name: str, super_category_id: str, visual_food_id: str | None = None
    ) -> FoodItem:
        """Create an item; without an explicit visual food it gets a singleton."""
        if super_category_id not in self.super_categories:
            raise TaxonomyError(f"unknown super category {super_category_id!r}")
        for item in self.food_items.values():
            if item.super_category_id == super_category_id and item.name == name:
                raise TaxonomyError(
                    f"duplicate item name {name!r} in category {super_category_id!r}"
                )
        if visual_food_id is not None:
            vf = self._get_visual_food(visual_food_id)
            if vf.is_non_food:
                raise TaxonomyError("cannot attach items to the non-food class")
        item = FoodItem(
            id=self._fresh_id(slugify(name), self.food_items),
            name=name,
            super_category_id=super_category_id,
            visual_food_id="",
        )
        self.food_items[item.id] = item
        if visual_food_id is None:
            vf = VisualFood(id=self._fresh_id(slugify(name), self.visual_foods), name=name)
            self.visual_foods[vf.id] = vf
            visual_food_id = vf.id
        self.visual_foods[visual_food_id].member_item_ids.add(item.id)
        item.visual_food_id = visual_food_id
        return item

    def merge_items_into_visual_food(self, item_ids: list[str], name: str) -> VisualFood:
        """Regroup the listed items under one new visual food.

        Visual foods emptied by the move are retired; each retired id gets a
        remap entry pointing at the new id.
        """
        if not item_ids:
            raise TaxonomyError("cannot merge an empty item list")
        items = [self._get_item(i) for i in item_ids]

        old_vf_ids = {it.visual_food_id for it in items}
        emptied = [
            vid
            for vid in old_vf_ids
            if self.visual_foods[vid].member_item_ids <= set(item_ids)
        ]
        for vid in emptied:
            del self.visual_foods[vid]
        for vid in old_vf_ids - set(emptied):
            self.visual_foods[vid].member_item_ids -= set(item_ids)

        new_id = slugify(name)
        if new_id in self.visual_foods:
            raise TaxonomyError(f"visual food name {name!r} already in use")
        vf = VisualFood(id=new_id, name=name, member_item_ids=set(item_ids))
        self.visual_foods[new_id] = vf
        for it in items:
            it.visual_food_id = new_id
        for vid in emptied:
            if vid != new_id:
                self.remap_log.append({"old_id": vid, "new_id": new_id})
        return vf

    def merge_visual_foods(self, vf_a: str, vf_b: str, name: str) -> VisualFood:
        """Union two visual foods into one class, retiring the old ids."""
        if vf_a == vf_b:
            raise TaxonomyError("cannot merge a visual food with itself")
        a = self._get_visual_food(vf_a)
        b = self._get_visual_food(vf_b)
        if a.is_non_food or b.is_non_food:
            raise TaxonomyError("the non-food class cannot be merged")

        new_id = slugify(name)
        if new_id in self.visual_foods and new_id not in (vf_a, vf_b):
            raise TaxonomyError(f"visual food name {name!r} already in use")
        members = a.member_item_ids | b.member_item_ids
        del self.visual_foods[vf_a]
        del self.visual_foods[vf_b]
        vf = VisualFood(id=new_id, name=name, member_item_ids=members)
        self.visual_foods[new_id] = vf
        for item_id in members:
            self.food_items[item_id].visual_food_id = new_id
        for old in (vf_a, vf_b):
            if old != new_id:
                self.remap_log.append({"old_id": old, "new_id": new_id})
        return vf

    def resolve_prediction_to_items(self, visual_food_id: str) -> list[FoodItem]:
        """Member items of a predicted class, sorted by name, for client refinement."""
        vf = self._get_visual_food(visual_food_id)
        items = [self.food_items[i] for i in vf.member_item_ids]
        return sorted(items, key=lambda it: it.name)

    # -- label space and remapping -------------------------------------------

    def label_space(self) -> list[str]:
        """Ordered visual food ids (sorted, non-food included)."""
        return sorted(self.visual_foods)

    def apply_remap(self, label: str) -> str:
        """Follow the remap log until the label lands in the current space."""
        seen = set()
        while label not in self.visual_foods:
            if label in seen:
                raise TaxonomyError(f"remap cycle at {label!r}")
            seen.add(label)
            for entry in self.remap_log:
                if entry["old_id"] == label:
                    label = entry["new_id"]
                    break
            else:
                raise TaxonomyError(f"label {label!r} has no remap target")
        return label

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "super_categories": [
                {"id": c.id, "name": c.name}
                for c in sorted(self.super_categories.values(), key=lambda c: c.id)
            ],
            "food_items": [
                {
                    "id": it.id,
                    "name": it.name,
                    "super_category_id": it.super_category_id,
                    "visual_food_id": it.visual_food_id,
                }
                for it in sorted(self.food_items.values(), key=lambda it: it.id)
            ],
            "visual_foods": [
                {
                    "id": vf.id,
                    "name": vf.name,
                    "member_item_ids": sorted(vf.member_item_ids),
                    "is_non_food": vf.is_non_food,
                }
                for vf in sorted(self.visual_foods.values(), key=lambda vf: vf.id)
            ],
            "remap_log": list(self.remap_log),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_dict(cls, data: dict) -> "Taxonomy":
        tax = cls.__new__(cls)
        tax.super_categories = {
            c["id"]: SuperCategory(id=c["id"], name=c["name"])
            for c in data["super_categories"]
        }
        tax.food_items = {
            it["id"]: FoodItem(
                id=it["id"],
                name=it["name"],
                super_category_id=it["super_category_id"],
                visual_food_id=it["visual_food_id"],
            )
            for it in data["food_items"]
        }
        tax.visual_foods = {
            vf["id"]: VisualFood(
                id=vf["id"],
                name=vf["name"],
                member_item_ids=set(vf["member_item_ids"]),
                is_non_food=vf["is_non_food"],
            )
            for vf in data["visual_foods"]
        }
        tax.remap_log = [dict(e) for e in data.get("remap_log", [])]
        tax._check_integrity()
        return tax

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def snapshot(self) -> "Taxonomy":
        """Deep immutable-by-convention copy for concurrent readers."""
        return copy.deepcopy(self)

    # -- internals --------------------------------------------------------------

    @staticmethod
    def _fresh_id(slug: str, taken) -> str:
        if slug not in taken:
            return slug
        n = 2
        while f"{slug}_{n}" in taken:
            n += 1
        return f"{slug}_{n}"

    def _get_item(self, item_id: str) -> FoodItem:
        if item_id not in self.food_items:
            raise TaxonomyError(f"unknown food item {item_id!r}")
        return self.food_items[item_id]

    def _get_visual_food(self, vf_id: str) -> VisualFood:
        if vf_id not in self.visual_foods:
            raise TaxonomyError(f"unknown visual food {vf_id!r}")
        return self.visual_foods[vf_id]

    def _check_integrity(self) -> None:
        non_food = [vf for vf in self.visual_foods.values() if vf.is_non_food]
        if len(non_food) != 1:
            raise TaxonomyError("exactly one non-food visual food is required")
        covered: set[str] = set()
        for vf in self.visual_foods.values():
            if covered & vf.member_item_ids:
                raise TaxonomyError("visual food member sets overlap")
            covered |= vf.member_item_ids
            if not vf.is_non_food and not vf.member_item_ids:
                raise TaxonomyError(f"visual food {vf.id!r} has no member items")
        if covered != set(self.food_items):
            raise TaxonomyError("visual foods do not partition the item set")
        for it in self.food_items.values():
            if it.super_category_id not in self.super_categories:
                raise TaxonomyError(f"item {it.id!r} references a missing category")
            if it.visual_food_id not in self.visual_foods:
                raise TaxonomyError(f"item {it.id!r} references a missing visual food")
