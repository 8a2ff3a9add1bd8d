"""Shipped scenes and the task suite.

Fixture layout, under ``srkitchen/data/scenes``::

    s<N>/scene.json           scene document (schema_version 1)
    s<N>/<level>-<key>.strips problem file; ``(:row "scene N, level")``
                              names its row in the task grid

Scene ``s9`` follows the itemized inventory. The other nine are
reconstructions (``"reconstruction": true`` in their scene documents).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .domain import SceneSpec, Task, TaskLevel, read_scene
from .strips import kitchen_domain, parse_problem
from .strips.parser import Problem

SCENE_COUNT = 10


class CatalogError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "catalog error"


def scenes_root() -> Path:
    return Path(str(resources.files("srkitchen.data").joinpath("scenes")))


def scene_names() -> list[str]:
    return [f"s{n}" for n in range(1, SCENE_COUNT + 1)]


def _scene_dir(scene: "str | int | Path") -> Path:
    """Resolve a scene reference: number, name (``s9``), or directory path."""
    if isinstance(scene, int):
        name = f"s{scene}"
    else:
        path = Path(scene)
        if path.is_dir() and (path / "scene.json").exists():
            return path
        if path.suffix == ".json" and path.exists():
            return path.parent
        name = path.name
        if re.fullmatch(r"\d+", name):
            name = "s" + name
        name = re.sub(r"^scene[-_]?", "s", name)
    d = scenes_root() / name
    if not (d / "scene.json").exists():
        raise CatalogError(f"unknown scene {scene!r}")
    return d


@lru_cache(maxsize=None)
def _load_scene_cached(path: str) -> SceneSpec:
    return read_scene(path)


def load_catalog_scene(scene: "str | int | Path") -> SceneSpec:
    """Scene spec for a catalog reference; loaded once per process."""
    return _load_scene_cached(str(_scene_dir(scene)))


def task_from_problem(problem: Problem, task_id: str | None = None) -> Task:
    goal = []
    for lit in problem.goal:
        if lit.negated:
            raise ValueError(f"{problem.name}: negative goals are not supported by tasks")
        if lit.predicate not in ("in", "open", "closed"):
            raise ValueError(f"{problem.name}: unsupported goal predicate {lit.predicate!r}")
        goal.append(lit.atom)
    if problem.level is None:
        raise ValueError(f"{problem.name}: problem file lacks (:level ...)")
    return Task(
        id=task_id or problem.name,
        scene=problem.scene or "",
        level=problem.level,
        description=problem.description,
        # toggle tasks get their direction when bound to an initial state
        goal=() if problem.toggle else tuple(goal),
        toggle=problem.toggle,
        row=problem.row,
    )


@lru_cache(maxsize=None)
def _scene_tasks(path: str) -> tuple[Task, ...]:
    out = []
    domain = kitchen_domain()
    for f in sorted(Path(path).glob("*.strips")):
        prob = parse_problem(f.read_text(encoding="utf-8"), domain)
        out.append(task_from_problem(prob, f.stem))
    order = {lv: k for k, lv in enumerate(TaskLevel)}
    return tuple(sorted(out, key=lambda t: (order[t.level], t.id)))


def scene_tasks(scene: "str | int | Path") -> list[Task]:
    return list(_scene_tasks(str(_scene_dir(scene))))


def catalog_lookup(scene: "str | int | Path", level: "TaskLevel | str") -> list[Task]:
    """Tasks defined for (scene, level); empty where the grid has a blank cell."""
    level = TaskLevel.parse(level)
    return [t for t in scene_tasks(scene) if t.level is level]


def load_task(scene: "str | int | Path", task: str) -> Task:
    """Look a task up by id (``easy-microwave``) or by level name (``easy``)."""
    tasks = scene_tasks(scene)
    for t in tasks:
        if t.id == task:
            return t
    by_level = [t for t in tasks if t.level.value == task]
    if len(by_level) == 1:
        return by_level[0]
    known = ", ".join(t.id for t in tasks)
    raise CatalogError(f"scene {scene!r} has no task {task!r} (known: {known})")


@dataclass(frozen=True)
class TaskCatalog:
    entries: dict

    @classmethod
    def load(cls) -> "TaskCatalog":
        return cls({(n, lv): catalog_lookup(n, lv) for n in range(1, SCENE_COUNT + 1)
                    for lv in TaskLevel})

    def counts(self) -> tuple[int, int, int]:
        return tuple(sum(len(v) for (_, lv), v in self.entries.items() if lv is level)
                     for level in TaskLevel)


def retarget(task: Task, item: str, scene: SceneSpec | None = None) -> Task:
    """Same placement task with a different target item (for transfer runs)."""
    _, dest = task.search_target
    if scene is not None and item not in scene.item_index:
        raise CatalogError(f"scene {scene.name} has no item {item!r}")
    return replace(
        task,
        id=f"{task.level.value}-{item}",
        description=f"find {item.replace('-', ' ')} and put in {dest.replace('-', ' ')}",
        goal=(("in", item, dest),),
        row="",
    )
