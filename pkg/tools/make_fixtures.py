"""Regenerate the shipped scene and task fixtures.

    python tools/make_fixtures.py

Scene 9 follows the itemized inventory (16 items, 23 receptacles at 11
locations, 15 containers). The other nine scenes are reconstructions built
from the same kitchen template with varied cabinet counts and inventories.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from srkitchen.domain import load_scene, read_scene  # noqa: E402
from srkitchen.strips import kitchen_domain, state_to_facts  # noqa: E402
from srkitchen.strips.grounding import scene_objects  # noqa: E402

OUT = ROOT / "src" / "srkitchen" / "data" / "scenes"

UP, LEVEL, DOWN = [30], [-30, 0, 30], [-30]

DECOR_POOL = [
    "window", "light-switch", "chair-1", "chair-2", "chair-3", "chair-4", "painting",
    "toaster", "paper-towel", "wall-clock", "plant", "curtain", "floor-mat",
    "radio", "blinds", "ceiling-lamp", "dish-sponge", "salt-shaker", "pepper-shaker",
    "spice-rack", "soap-bottle", "calendar",
]


def kitchen(
    name: str,
    n_cabinets: int,
    items: dict[str, str],
    *,
    burners: int = 4,
    microwave: bool = True,
    counter: bool = False,
    upper_groups: tuple[int, ...] = (),
    n_decor: int = 12,
    reconstruction: bool = True,
    row: str = "",
):
    """Template kitchen. Cabinets 1-4 sit low (sink, stove); the rest are
    mounted high in groups given by ``upper_groups``."""
    locs, recs = [], []

    def loc(lid, heading):
        locs.append({"id": lid, "heading": heading})

    def rec(rid, where, *, container=False, capacity=4, views=LEVEL):
        recs.append({
            "id": rid, "class": rid, "location": where,
            "container": container, "capacity": capacity, "views": views,
        })

    loc("loc-fridge", 0)
    rec("fridge", "loc-fridge", container=True, capacity=6)
    if microwave:
        loc("loc-microwave", 90)
        rec("microwave", "loc-microwave", container=True, capacity=2)
    loc("loc-sink", 90)
    rec("sink", "loc-sink", capacity=4)
    low = min(4, n_cabinets)
    for k in range(1, min(2, low) + 1):
        rec(f"cabinet-{k}", "loc-sink", container=True, capacity=3, views=DOWN)
    loc("loc-stove", 180)
    for k in range(1, burners + 1):
        rec(f"stove-burner-{k}", "loc-stove", capacity=1)
    for k in range(3, low + 1):
        rec(f"cabinet-{k}", "loc-stove", container=True, capacity=3, views=DOWN)
    loc("loc-table", 270)
    rec("table-top", "loc-table", capacity=8)
    if counter:
        loc("loc-counter", 180)
        rec("counter-top", "loc-counter", capacity=6)
    loc("loc-garbage", 0)
    rec("garbage-can", "loc-garbage", capacity=4, views=[-30, 0])
    loc("loc-coffee", 90)
    rec("coffee-machine", "loc-coffee", capacity=1)
    k = 5
    groups = upper_groups or ((n_cabinets - 4,) if n_cabinets > 4 else ())
    assert sum(groups) == max(0, n_cabinets - 4), (name, groups)
    for g, size in enumerate(groups):
        where = f"loc-cabinets-{chr(ord('a') + g)}"
        loc(where, (g * 90) % 360)
        for _ in range(size):
            rec(f"cabinet-{k}", where, container=True, capacity=3, views=UP)
            k += 1
    for r in recs:
        base = r["id"]
        r["class"] = base.rsplit("-", 1)[0] if base.rsplit("-", 1)[-1].isdigit() else base
    item_list = []
    for iid, where in items.items():
        cat = iid.rsplit("-", 1)[0] if iid.rsplit("-", 1)[-1].isdigit() else iid
        item_list.append({"id": iid, "category": cat, "in": where})
    return {
        "schema_version": 1,
        "name": name,
        "reconstruction": reconstruction,
        "metadata": {"row": row},
        "locations": locs,
        "receptacles": recs,
        "items": item_list,
        "decor": DECOR_POOL[:n_decor],
        "agent": {"location": locs[0]["id"], "rotation": 0, "viewpoint": 0},
    }


SCENE9_ITEMS = {
    "apple": "fridge",
    "bowl": "cabinet-3",
    "bread": "table-top",
    "butter-knife": "cabinet-6",
    "glass-bottle": "cabinet-9",
    "egg": "fridge",
    "fork": "cabinet-2",
    "knife": "cabinet-4",
    "lettuce": "fridge",
    "mug-1": "cabinet-5",
    "mug-2": "coffee-machine",
    "mug-3": "sink",
    "plate": "cabinet-10",
    "potato": "garbage-can",
    "spoon": "cabinet-12",
    "tomato": "table-top",
}

SCENES = {
    1: dict(n_cabinets=10, upper_groups=(3, 3), counter=True, n_decor=10, items={
        "lettuce": "fridge", "tomato": "counter-top", "glass-bottle": "cabinet-6",
        "bowl": "cabinet-3", "egg": "fridge", "container": "cabinet-8", "apple": "table-top",
        "bread": "counter-top", "mug-1": "cabinet-5", "mug-2": "coffee-machine",
        "plate": "cabinet-9", "potato": "garbage-can", "spoon": "cabinet-1", "knife": "cabinet-4",
    }),
    2: dict(n_cabinets=12, upper_groups=(4, 4), n_decor=13, items={
        "apple": "fridge", "egg": "cabinet-5", "glass-bottle": "sink", "plate": "table-top",
        "bowl": "cabinet-2", "bread": "cabinet-9", "mug-1": "coffee-machine", "mug-2": "cabinet-10",
        "tomato": "fridge", "lettuce": "fridge", "fork": "cabinet-3", "spoon": "cabinet-6",
        "potato": "garbage-can",
    }),
    3: dict(n_cabinets=9, upper_groups=(3, 2), counter=True, n_decor=14, items={
        "glass-bottle": "cabinet-7", "lettuce": "sink", "apple": "fridge", "bowl": "cabinet-1",
        "bread": "counter-top", "egg": "fridge", "mug-1": "cabinet-5", "mug-2": "coffee-machine",
        "plate": "cabinet-8", "tomato": "counter-top", "potato": "fridge", "knife": "cabinet-3",
    }),
    4: dict(n_cabinets=13, upper_groups=(3, 3, 3), n_decor=10, items={
        "mug-1": "cabinet-6", "mug-2": "coffee-machine", "mug-3": "sink",
        "glass-bottle": "table-top", "apple": "fridge", "bowl": "cabinet-9", "bread": "table-top",
        "egg": "fridge", "lettuce": "fridge", "plate": "cabinet-12", "tomato": "sink",
        "spoon": "cabinet-2", "fork": "cabinet-4", "potato": "garbage-can",
    }),
    5: dict(n_cabinets=8, upper_groups=(2, 2), counter=True, n_decor=15, items={
        "apple": "fridge", "bread": "counter-top", "mug-1": "cabinet-5", "plate": "cabinet-7",
        "tomato": "table-top", "lettuce": "fridge", "egg": "fridge", "bowl": "cabinet-2",
        "glass-bottle": "sink", "potato": "counter-top",
    }),
    6: dict(n_cabinets=11, upper_groups=(4, 3), microwave=False, n_decor=16, items={
        "apple": "table-top", "bread": "table-top", "mug-1": "cabinet-8", "mug-2": "coffee-machine",
        "plate": "cabinet-6", "tomato": "fridge", "lettuce": "fridge", "egg": "fridge",
        "bowl": "cabinet-3", "glass-bottle": "cabinet-10", "knife": "cabinet-1",
    }),
    7: dict(n_cabinets=10, upper_groups=(3, 3), counter=True, n_decor=12, items={
        "mug-1": "cabinet-5", "mug-2": "coffee-machine", "mug-3": "counter-top",
        "apple": "fridge", "bread": "counter-top", "bowl": "cabinet-8", "plate": "cabinet-9",
        "glass-bottle": "sink", "egg": "fridge", "lettuce": "fridge", "spoon": "cabinet-3",
    }),
    8: dict(n_cabinets=12, upper_groups=(4, 4), n_decor=11, items={
        "potato": "counter-top", "tomato": "fridge", "apple": "table-top", "lettuce": "cabinet-6",
        "bread": "table-top", "bowl": "cabinet-2", "egg": "fridge", "glass-bottle": "cabinet-9",
        "mug-1": "coffee-machine", "plate": "cabinet-11", "fork": "cabinet-4", "knife": "cabinet-5",
    }, counter=True),
    10: dict(n_cabinets=11, upper_groups=(4, 3), counter=True, n_decor=13, items={
        "glass-bottle": "cabinet-5", "bread": "counter-top", "lettuce": "sink", "bowl": "cabinet-7",
        "apple": "fridge", "egg": "fridge", "mug-1": "coffee-machine", "mug-2": "cabinet-10",
        "plate": "cabinet-1", "tomato": "table-top", "potato": "garbage-can", "spoon": "cabinet-3",
    }),
}

# scene -> (easy container, medium (items, destination), hard (item, destination))
TASKS = {
    1: ("fridge", (["lettuce", "tomato", "glass-bottle"], "sink"), ("bowl", "sink")),
    2: ("cabinet-5", (["apple", "egg", "glass-bottle"], "table-top"), ("plate", "cabinet-1")),
    3: ("microwave", (["glass-bottle", "lettuce", "apple"], "table-top"), ("lettuce", "fridge")),
    4: ("cabinet-1", (["mug-1", "mug-2", "mug-3"], "fridge"), ("glass-bottle", "microwave")),
    5: ("fridge", None, None),
    6: ("fridge", None, None),
    7: ("cabinet-3", (["mug-1", "mug-2", "mug-3"], "table-top"), None),
    8: ("fridge", (["potato", "tomato", "apple"], "sink"), ("lettuce", "table-top")),
    9: ("microwave", (["mug-1", "mug-2", "mug-3"], "table-top"), ("glass-bottle", "fridge")),
    10: ("cabinet-8", (["glass-bottle", "bread", "lettuce"], "fridge"), ("bowl", "sink")),
}

DESCRIPTIONS = {
    "easy": "open/close {0}",
    "medium": "put {0} to the {1}",
    "hard": "find {0} and put in {1}",
}


def _words(items):
    if items[0].startswith("mug-"):
        return "three mugs"
    names = [i.replace("-", " ") for i in items]
    return ", ".join(names[:-1]) + " and " + names[-1]


def problem_text(scene_doc, task_id, level, description, goal, toggle=None, row=""):
    scene = read_scene(scene_doc)
    domain = kitchen_domain()
    objs = scene_objects(scene)
    by_type: dict[str, list[str]] = {}
    for o, t in objs.items():
        by_type.setdefault(t, []).append(o)
    facts = sorted(state_to_facts(scene, load_scene(scene)))
    lines = [
        f";; scene {scene.name}, {level} task: {description}",
        f"(define (problem {scene.name}-{task_id})",
        f"  (:domain {domain.name})",
        f"  (:scene {scene.name})",
        f"  (:level {level})",
        f'  (:description "{description}")',
    ]
    if row:
        lines.append(f'  (:row "{row}")')
    if toggle:
        lines.append(f"  (:toggle {toggle})")
    lines.append("  (:objects")
    for t, names in by_type.items():
        lines.append("    " + " ".join(names) + f" - {t}")
    lines.append("  )")
    lines.append("  (:init")
    for f in facts:
        lines.append("    (" + " ".join(f) + ")")
    lines.append("  )")
    goal_s = " ".join("(" + " ".join(g) + ")" for g in goal)
    lines.append(f"  (:goal (and {goal_s})))")
    return "\n".join(lines) + "\n"


def main():
    docs = {}
    for n in range(1, 11):
        name = f"s{n}"
        if n == 9:
            doc = kitchen(name, 13, SCENE9_ITEMS, upper_groups=(3, 2, 2, 2), n_decor=14,
                          reconstruction=False)
            # scene 9's stove location holds the two low cabinets 3-4 and its
            # fourth upper group sits low in a corner
            for r in doc["receptacles"]:
                if r["location"] == "loc-cabinets-d":
                    r["views"] = DOWN
        else:
            cfg = dict(SCENES[n])
            items = cfg.pop("items")
            doc = kitchen(name, cfg.pop("n_cabinets"), items, **cfg)
        docs[n] = doc
        scene = read_scene(doc)
        d = OUT / name
        d.mkdir(parents=True, exist_ok=True)
        for old in d.glob("*.strips"):
            old.unlink()
        (d / "scene.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        easy, medium, hard = TASKS[n]
        desc = DESCRIPTIONS["easy"].format(easy.rsplit("-", 1)[0] if easy.startswith("cabinet") else easy)
        state = load_scene(scene)
        slot = scene.container_slot[scene.receptacle_index[easy]]
        want = "closed" if state.container_open[slot] else "open"
        (d / f"easy-{easy}.strips").write_text(
            problem_text(doc, f"easy-{easy}", "easy", desc, [(want, easy)], toggle=easy,
                         row=f"scene {n} easy"),
            encoding="utf-8",
        )
        if medium:
            items, dest = medium
            desc = DESCRIPTIONS["medium"].format(_words(items), dest.replace("-", " "))
            (d / f"medium-{dest}.strips").write_text(
                problem_text(doc, f"medium-{dest}", "medium", desc, [("in", i, dest) for i in items],
                             row=f"scene {n} medium"),
                encoding="utf-8",
            )
        if hard:
            item, dest = hard
            desc = DESCRIPTIONS["hard"].format(item.replace("-", " "), dest.replace("-", " "))
            (d / f"hard-{item}.strips").write_text(
                problem_text(doc, f"hard-{item}", "hard", desc, [("in", item, dest)],
                             row=f"scene {n} hard"),
                encoding="utf-8",
            )
        print(name, "objects", scene.total_objects, "interactable", scene.n_objects,
              "receptacles", len(scene.receptacles), "items", len(scene.items),
              "locations", len(scene.locations), "containers", len(scene.containers))


if __name__ == "__main__":
    main()
