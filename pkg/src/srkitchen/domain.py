"""Symbolic kitchen world: objects, scenes, world states and action semantics.

Everything here is pure. A :class:`WorldState` is an immutable value and
:func:`apply_action` returns a new state instead of mutating its input.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCENE_SCHEMA_VERSION = 1

INVENTORY = -1
NOTHING = -1

VIEWPOINTS = (-30, 0, 30)
LEVEL_VIEW = 1
HEADINGS = (0, 90, 180, 270)
DEFAULT_CAPACITY = 4


class SceneError(ValueError):
    """A scene document failed validation."""


class ActionType(enum.IntEnum):
    NAVIGATE = 0
    OPEN = 1
    CLOSE = 2
    PICKUP = 3
    PUT = 4
    LOOK_UP = 5
    LOOK_DOWN = 6

    @property
    def label(self) -> str:
        return _TYPE_LABELS[self]

    @classmethod
    def from_label(cls, text: str) -> "ActionType":
        key = text.lower().replace("_", "").replace("-", "")
        for t, lab in _TYPE_LABELS.items():
            if lab.lower() == key:
                return t
        raise ValueError(f"unknown action type {text!r}")


_TYPE_LABELS = {
    ActionType.NAVIGATE: "Navigate",
    ActionType.OPEN: "Open",
    ActionType.CLOSE: "Close",
    ActionType.PICKUP: "PickUp",
    ActionType.PUT: "Put",
    ActionType.LOOK_UP: "LookUp",
    ActionType.LOOK_DOWN: "LookDown",
}


class TaskLevel(enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @classmethod
    def parse(cls, value: "str | TaskLevel") -> "TaskLevel":
        if isinstance(value, TaskLevel):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown task level {value!r}") from None


@dataclass(frozen=True)
class ObjectClass:
    """An interactable object. Items are portable, receptacles are stationary."""

    id: str
    kind: str
    category: str
    is_container: bool = False
    capacity: int = 0
    location: str | None = None
    views: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.kind not in ("item", "receptacle"):
            raise SceneError(f"object {self.id!r}: kind must be item or receptacle")
        if self.is_container and self.kind != "receptacle":
            raise SceneError(f"object {self.id!r}: only receptacles can be containers")
        if self.kind == "receptacle" and self.capacity < 1:
            raise SceneError(f"receptacle {self.id!r}: capacity must be >= 1")
        if not self.views or any(v not in (0, 1, 2) for v in self.views):
            raise SceneError(f"object {self.id!r}: bad viewpoint list {self.views!r}")


@dataclass(frozen=True)
class Location:
    id: str
    heading: int  # index into HEADINGS


@dataclass(frozen=True, slots=True)
class WorldState:
    """Full symbolic configuration of a scene.

    ``item_location[i]`` is a receptacle index or ``INVENTORY``;
    ``container_open[k]`` follows :attr:`SceneSpec.containers` order.
    Rotation and viewpoint are indices into ``HEADINGS`` and ``VIEWPOINTS``.
    """

    item_location: tuple[int, ...]
    container_open: tuple[bool, ...]
    agent_location: int
    agent_rotation: int
    agent_viewpoint: int
    held: int = NOTHING


@dataclass(eq=False)
class SceneSpec:
    """A kitchen scene: objects, location groupings and initial placements.

    Receptacles sharing a location are one navigation target; items sharing
    a category are picked up by one action.
    """

    name: str
    locations: tuple[Location, ...]
    receptacles: tuple[ObjectClass, ...]
    items: tuple[ObjectClass, ...]
    placements: dict[str, str]
    open_containers: frozenset[str] = frozenset()
    agent_location: str | None = None
    agent_rotation: int = 0
    agent_viewpoint: int = LEVEL_VIEW
    decor: tuple[str, ...] = ()
    reconstruction: bool = True
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    # --- validation -----------------------------------------------------
    def _validate(self):
        seen: set[str] = set()
        for ident in (
            [loc.id for loc in self.locations]
            + [o.id for o in self.receptacles]
            + [o.id for o in self.items]
            + list(self.decor)
        ):
            if ident in seen:
                raise SceneError(f"duplicate id {ident!r}")
            seen.add(ident)
        loc_ids = {loc.id for loc in self.locations}
        for loc in self.locations:
            if loc.heading not in range(4):
                raise SceneError(f"location {loc.id!r}: heading index out of range")
        for r in self.receptacles:
            if r.kind != "receptacle":
                raise SceneError(f"{r.id!r} listed as receptacle but kind={r.kind}")
            if r.location not in loc_ids:
                raise SceneError(f"receptacle {r.id!r}: unknown location {r.location!r}")
        for it in self.items:
            if it.kind != "item":
                raise SceneError(f"{it.id!r} listed as item but kind={it.kind}")
            if it.id not in self.placements:
                raise SceneError(f"item {it.id!r} has no initial placement")
        rec_ids = {r.id for r in self.receptacles}
        for item, where in self.placements.items():
            if item not in {i.id for i in self.items}:
                raise SceneError(f"placement for unknown item {item!r}")
            if where not in rec_ids:
                raise SceneError(f"item {item!r} placed in unknown receptacle {where!r}")
        occupancy: dict[str, int] = {}
        for where in self.placements.values():
            occupancy[where] = occupancy.get(where, 0) + 1
        for r in self.receptacles:
            if occupancy.get(r.id, 0) > r.capacity:
                raise SceneError(f"receptacle {r.id!r} over capacity")
        for c in self.open_containers:
            if c not in rec_ids or not self.receptacles[self.receptacle_index[c]].is_container:
                raise SceneError(f"open flag on non-container {c!r}")
        for loc in self.locations:
            if not any(r.location == loc.id for r in self.receptacles):
                raise SceneError(f"location {loc.id!r} groups no receptacle")
        if self.receptacles or self.items:
            if self.agent_location not in loc_ids:
                raise SceneError(f"agent placed at unknown location {self.agent_location!r}")
        if self.agent_viewpoint not in (0, 1, 2) or self.agent_rotation not in range(4):
            raise SceneError("agent pose out of range")

    # --- indices ----------------------------------------------------------
    @cached_property
    def location_index(self) -> dict[str, int]:
        return {loc.id: k for k, loc in enumerate(self.locations)}

    @cached_property
    def receptacle_index(self) -> dict[str, int]:
        return {r.id: k for k, r in enumerate(self.receptacles)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {it.id: k for k, it in enumerate(self.items)}

    @cached_property
    def containers(self) -> tuple[int, ...]:
        """Receptacle indices of containers, in declaration order."""
        return tuple(k for k, r in enumerate(self.receptacles) if r.is_container)

    @cached_property
    def container_slot(self) -> dict[int, int]:
        return {r: k for k, r in enumerate(self.containers)}

    @cached_property
    def receptacle_location(self) -> tuple[int, ...]:
        return tuple(self.location_index[r.location] for r in self.receptacles)

    @cached_property
    def receptacle_views(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(r.views) for r in self.receptacles)

    @cached_property
    def capacity(self) -> tuple[int, ...]:
        return tuple(r.capacity for r in self.receptacles)

    @cached_property
    def categories(self) -> tuple[str, ...]:
        out: list[str] = []
        for it in self.items:
            if it.category not in out:
                out.append(it.category)
        return tuple(out)

    @cached_property
    def category_members(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(k for k, it in enumerate(self.items) if it.category == cat)
            for cat in self.categories
        )

    @cached_property
    def item_category(self) -> tuple[int, ...]:
        cat = {c: k for k, c in enumerate(self.categories)}
        return tuple(cat[it.category] for it in self.items)

    @cached_property
    def location_members(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(k for k, r in enumerate(self.receptacles) if r.location == loc.id)
            for loc in self.locations
        )

    @cached_property
    def objects(self) -> tuple[str, ...]:
        """Interactable object ids: receptacles first, then items."""
        return tuple(r.id for r in self.receptacles) + tuple(i.id for i in self.items)

    @property
    def n_objects(self) -> int:
        return len(self.receptacles) + len(self.items)

    @property
    def total_objects(self) -> int:
        return self.n_objects + len(self.decor)

    def location_of(self, receptacle: str) -> str:
        return self.receptacles[self.receptacle_index[receptacle]].location

    def has_view_gating(self) -> bool:
        return any(len(v) < 3 for v in self.receptacle_views)


@dataclass(frozen=True)
class GroundedAction:
    """One agent-level action: an action type bound to a concrete argument.

    ``target`` indexes the scene table relevant to the type: locations for
    Navigate, receptacles for Open/Close/Put, categories for PickUp, and -1
    for the two look actions. ``operators`` holds the grounded STRIPS
    operators merged into this action (filled by grounding).
    """

    ordinal: int
    type: ActionType
    argument: str | None
    target: int
    operators: tuple = ()

    def __str__(self) -> str:
        if self.argument is None:
            return self.type.label
        return f"{self.type.label} {self.argument}"


@dataclass(frozen=True)
class Task:
    """A goal over world states.

    ``goal`` is a conjunction of literals ``("in", item, receptacle)``,
    ``("open", container)`` or ``("closed", container)``. Toggle tasks carry
    the container in ``toggle`` and get their goal from :meth:`bind`.
    """

    id: str
    scene: str
    level: TaskLevel
    description: str
    goal: tuple[tuple[str, ...], ...] = ()
    toggle: str | None = None
    row: str = ""

    def bind(self, scene: SceneSpec, state: WorldState) -> "Task":
        """Fix the goal of a toggle task relative to ``state``."""
        if self.toggle is None:
            return self
        slot = scene.container_slot[scene.receptacle_index[self.toggle]]
        want = "closed" if state.container_open[slot] else "open"
        return replace(self, goal=((want, self.toggle),))

    @property
    def search_target(self) -> tuple[str, str]:
        """(item, destination) of a single-placement task."""
        lits = [g for g in self.goal if g[0] == "in"]
        if len(lits) != 1:
            raise ValueError(f"task {self.id} is not a single-item placement")
        return lits[0][1], lits[0][2]


# --------------------------------------------------------------------------
# scene files

def read_scene(source: "str | Path | dict") -> SceneSpec:
    """Parse a scene document (path, JSON text or decoded dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            path = Path(source)
            if path.is_dir():
                path = path / "scene.json"
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise
            except json.JSONDecodeError as exc:
                raise SceneError(f"{path}: not valid JSON ({exc})") from None
    return _scene_from_doc(doc)


def _scene_from_doc(doc: dict) -> SceneSpec:
    if doc.get("schema_version") != SCENE_SCHEMA_VERSION:
        raise SceneError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        name = doc["name"]
        locations = tuple(
            Location(loc["id"], HEADINGS.index(loc.get("heading", 0)))
            for loc in doc.get("locations", [])
        )
    except (KeyError, ValueError) as exc:
        raise SceneError(f"bad location entry: {exc}") from None
    receptacles, items, placements = [], [], {}
    opened = set()
    for entry in doc.get("receptacles", []):
        rid = entry.get("id")
        if not rid:
            raise SceneError("receptacle entry without id")
        try:
            views = tuple(VIEWPOINTS.index(v) for v in entry.get("views", VIEWPOINTS))
        except ValueError:
            raise SceneError(f"receptacle {rid!r}: viewpoints must be in {VIEWPOINTS}") from None
        receptacles.append(
            ObjectClass(
                id=rid,
                kind="receptacle",
                category=entry.get("class", rid),
                is_container=bool(entry.get("container", False)),
                capacity=int(entry.get("capacity", DEFAULT_CAPACITY)),
                location=entry.get("location"),
                views=views,
            )
        )
        if entry.get("open", False):
            if not entry.get("container", False):
                raise SceneError(f"receptacle {rid!r}: only containers can start open")
            opened.add(rid)
    for entry in doc.get("items", []):
        iid = entry.get("id")
        if not iid:
            raise SceneError("item entry without id")
        items.append(ObjectClass(id=iid, kind="item", category=entry.get("category", iid)))
        if "in" not in entry:
            raise SceneError(f"item {iid!r} has no initial placement")
        placements[iid] = entry["in"]
    agent = doc.get("agent", {})
    try:
        rotation = HEADINGS.index(agent.get("rotation", 0))
        viewpoint = VIEWPOINTS.index(agent.get("viewpoint", 0))
    except ValueError:
        raise SceneError("agent rotation/viewpoint out of range") from None
    return SceneSpec(
        name=name,
        locations=locations,
        receptacles=tuple(receptacles),
        items=tuple(items),
        placements=placements,
        open_containers=frozenset(opened),
        agent_location=agent.get("location", locations[0].id if locations else None),
        agent_rotation=rotation,
        agent_viewpoint=viewpoint,
        decor=tuple(doc.get("decor", [])),
        reconstruction=bool(doc.get("reconstruction", True)),
        metadata=dict(doc.get("metadata", {})),
    )


def scene_to_doc(scene: SceneSpec) -> dict:
    """Inverse of :func:`read_scene` for a dict document."""
    open_ = scene.open_containers
    return {
        "schema_version": SCENE_SCHEMA_VERSION,
        "name": scene.name,
        "reconstruction": scene.reconstruction,
        "metadata": scene.metadata,
        "locations": [{"id": l.id, "heading": HEADINGS[l.heading]} for l in scene.locations],
        "receptacles": [
            {
                "id": r.id,
                "class": r.category,
                "location": r.location,
                "container": r.is_container,
                "capacity": r.capacity,
                "views": [VIEWPOINTS[v] for v in r.views],
                **({"open": True} if r.id in open_ else {}),
            }
            for r in scene.receptacles
        ],
        "items": [
            {"id": it.id, "category": it.category, "in": scene.placements[it.id]}
            for it in scene.items
        ],
        "decor": list(scene.decor),
        "agent": {
            "location": scene.agent_location,
            "rotation": HEADINGS[scene.agent_rotation],
            "viewpoint": VIEWPOINTS[scene.agent_viewpoint],
        },
    }


# --------------------------------------------------------------------------
# states

def load_scene(scene: SceneSpec) -> WorldState:
    """Initial world state exactly as the scene declares it."""
    items = tuple(scene.receptacle_index[scene.placements[it.id]] for it in scene.items)
    opened = tuple(scene.receptacles[r].id in scene.open_containers for r in scene.containers)
    loc = scene.location_index.get(scene.agent_location, 0) if scene.agent_location else 0
    return WorldState(
        item_location=items,
        container_open=opened,
        agent_location=loc,
        agent_rotation=scene.agent_rotation,
        agent_viewpoint=scene.agent_viewpoint,
        held=NOTHING,
    )


def check_state(scene: SceneSpec, state: WorldState) -> None:
    """Raise ``AssertionError`` if ``state`` breaks a world invariant."""
    n_rec = len(scene.receptacles)
    assert len(state.item_location) == len(scene.items)
    assert len(state.container_open) == len(scene.containers)
    in_hand = [i for i, r in enumerate(state.item_location) if r == INVENTORY]
    assert len(in_hand) <= 1, "more than one held item"
    assert (state.held == NOTHING) == (not in_hand), "held flag disagrees with inventory"
    if in_hand:
        assert state.held == in_hand[0]
    occ = [0] * n_rec
    for r in state.item_location:
        if r != INVENTORY:
            assert 0 <= r < n_rec
            occ[r] += 1
    for r in range(n_rec):
        assert occ[r] <= scene.capacity[r], f"receptacle {scene.receptacles[r].id} over capacity"
    assert 0 <= state.agent_location < max(1, len(scene.locations))
    assert state.agent_rotation in range(4) and state.agent_viewpoint in range(3)


def occupancy(state: WorldState, receptacle: int) -> int:
    return sum(1 for r in state.item_location if r == receptacle)


def is_accessible(scene: SceneSpec, state: WorldState, receptacle: int) -> bool:
    slot = scene.container_slot.get(receptacle)
    return slot is None or state.container_open[slot]


def visible_receptacles(scene: SceneSpec, state: WorldState) -> list[int]:
    return list(scene.location_members[state.agent_location]) if scene.locations else []


def visible_items(scene: SceneSpec, state: WorldState) -> list[int]:
    """Items the agent can see: in an accessible receptacle here, or held."""
    out = []
    here = state.agent_location
    rloc = scene.receptacle_location
    for i, r in enumerate(state.item_location):
        if r == INVENTORY:
            out.append(i)
        elif rloc[r] == here and is_accessible(scene, state, r):
            out.append(i)
    return out


def _reachable(scene: SceneSpec, state: WorldState, receptacle: int) -> bool:
    return (
        scene.receptacle_location[receptacle] == state.agent_location
        and state.agent_viewpoint in scene.receptacle_views[receptacle]
    )


def pickup_candidate(scene: SceneSpec, state: WorldState, category: int) -> int:
    """Lowest-index item of ``category`` that can be picked up now, or -1."""
    if state.held != NOTHING:
        return NOTHING
    for i in scene.category_members[category]:
        r = state.item_location[i]
        if r != INVENTORY and _reachable(scene, state, r) and is_accessible(scene, state, r):
            return i
    return NOTHING


def precondition_holds(scene: SceneSpec, state: WorldState, action: GroundedAction) -> bool:
    t, k = action.type, action.target
    if t is ActionType.NAVIGATE:
        return state.agent_location != k
    if t is ActionType.OPEN or t is ActionType.CLOSE:
        if not _reachable(scene, state, k):
            return False
        is_open = state.container_open[scene.container_slot[k]]
        return (not is_open) if t is ActionType.OPEN else is_open
    if t is ActionType.PICKUP:
        return pickup_candidate(scene, state, k) != NOTHING
    if t is ActionType.PUT:
        return (
            state.held != NOTHING
            and _reachable(scene, state, k)
            and is_accessible(scene, state, k)
            and occupancy(state, k) < scene.capacity[k]
        )
    if t is ActionType.LOOK_UP:
        return state.agent_viewpoint < len(VIEWPOINTS) - 1
    if t is ActionType.LOOK_DOWN:
        return state.agent_viewpoint > 0
    raise ValueError(f"unknown action type {t!r}")


def applicable_actions(
    scene: SceneSpec, state: WorldState, actions: Sequence[GroundedAction]
) -> list[GroundedAction]:
    return [a for a in actions if precondition_holds(scene, state, a)]


def apply_action(
    scene: SceneSpec, state: WorldState, action: GroundedAction
) -> tuple[WorldState, bool]:
    """Execute ``action``; a failed precondition leaves ``state`` unchanged."""
    if not precondition_holds(scene, state, action):
        return state, False
    t, k = action.type, action.target
    if t is ActionType.NAVIGATE:
        return (
            replace(
                state,
                agent_location=k,
                agent_rotation=scene.locations[k].heading,
                agent_viewpoint=LEVEL_VIEW,
            ),
            True,
        )
    if t is ActionType.OPEN or t is ActionType.CLOSE:
        flags = list(state.container_open)
        flags[scene.container_slot[k]] = t is ActionType.OPEN
        return replace(state, container_open=tuple(flags)), True
    if t is ActionType.PICKUP:
        item = pickup_candidate(scene, state, k)
        locs = list(state.item_location)
        locs[item] = INVENTORY
        return replace(state, item_location=tuple(locs), held=item), True
    if t is ActionType.PUT:
        locs = list(state.item_location)
        locs[state.held] = k
        return replace(state, item_location=tuple(locs), held=NOTHING), True
    step = 1 if t is ActionType.LOOK_UP else -1
    return replace(state, agent_viewpoint=state.agent_viewpoint + step), True


def goal_satisfied(scene: SceneSpec, task: Task, state: WorldState) -> bool:
    if task.toggle is not None and not task.goal:
        raise ValueError(f"toggle task {task.id} must be bound to an initial state first")
    for lit in task.goal:
        if lit[0] == "in":
            if state.item_location[scene.item_index[lit[1]]] != scene.receptacle_index[lit[2]]:
                return False
        else:
            slot = scene.container_slot[scene.receptacle_index[lit[1]]]
            if state.container_open[slot] != (lit[0] == "open"):
                return False
    return True


# --------------------------------------------------------------------------
# randomization

def randomize_scene(
    scene: SceneSpec, level: "TaskLevel | str", seed: int, reserve: Iterable[str] = ()
) -> WorldState:
    """Sample an initial state for ``level``.

    Every level draws the agent's location and heading. Easy additionally
    draws each container's open flag; hard draws every item's receptacle
    (uniform over receptacles with room left, keeping one slot free in each
    ``reserve`` receptacle). Medium keeps the declared item placements and
    container flags.
    """
    level = TaskLevel.parse(level)
    rng = np.random.default_rng(seed)
    base = load_scene(scene)
    if not scene.locations:
        return base
    loc = int(rng.integers(len(scene.locations)))
    rot = int(rng.integers(len(HEADINGS)))
    state = replace(base, agent_location=loc, agent_rotation=rot, agent_viewpoint=LEVEL_VIEW)
    if level is TaskLevel.EASY:
        flags = tuple(bool(b) for b in rng.integers(0, 2, size=len(scene.containers)))
        state = replace(state, container_open=flags)
    elif level is TaskLevel.HARD:
        free = list(scene.capacity)
        for rid in reserve:
            free[scene.receptacle_index[rid]] -= 1
        locs = []
        for _ in scene.items:
            options = [r for r in range(len(scene.receptacles)) if free[r] > 0]
            r = options[int(rng.integers(len(options)))]
            free[r] -= 1
            locs.append(r)
        state = replace(state, item_location=tuple(locs))
    return state


def random_walk(
    scene: SceneSpec,
    state: WorldState,
    actions: Sequence[GroundedAction],
    steps: int,
    rng: np.random.Generator,
) -> Iterable[tuple[WorldState, GroundedAction, bool]]:
    """Yield (state, action, success) along a uniformly random action walk."""
    for _ in range(steps):
        a = actions[int(rng.integers(len(actions)))]
        state, ok = apply_action(scene, state, a)
        yield state, a, ok
