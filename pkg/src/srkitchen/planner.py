"""Optimal plans for kitchen tasks, plus the fixed-order search plans used on
hard tasks.

:func:`plan` is breadth-first search over world states with a goal check at
generation time. Successors are expanded in action-ordinal order, so ties
between equally short plans are broken the same way every run.

To keep the search small it first runs on a relevance-pruned action set:
the agent only navigates to locations that matter for the goal, only opens
containers that matter, and only picks up goal items (or junk sitting in a
destination that has run out of room). If the pruned search fails the full
action set is searched.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .domain import (
    INVENTORY,
    NOTHING,
    ActionType,
    GroundedAction,
    SceneSpec,
    Task,
    WorldState,
    apply_action,
    goal_satisfied,
    pickup_candidate,
    precondition_holds,
    visible_items,
)
from .strips import scene_actions

DEFAULT_MAX_STATES = 2_000_000


class PlanError(RuntimeError):
    """Planning could not produce a plan."""


class Unsolvable(PlanError):
    """The goal cannot be reached from the given state."""


@dataclass(frozen=True)
class Plan:
    actions: tuple[GroundedAction, ...]

    @property
    def cost(self) -> int:
        return len(self.actions)

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def to_text(self) -> str:
        """One action per line, ``<type> <argument>``."""
        return "".join(f"{a}\n" for a in self.actions)


# --------------------------------------------------------------------------
# goals


class _Goal:
    """Compiled goal test plus the relevance filter for one task."""

    def __init__(self, scene: SceneSpec, task: Task):
        if task.toggle is not None and not task.goal:
            raise ValueError(f"toggle task {task.id} must be bound to a state before planning")
        self.scene = scene
        self.placements: list[tuple[int, int]] = []
        self.flags: list[tuple[int, int, bool]] = []  # (receptacle, slot, want_open)
        for lit in task.goal:
            if lit[0] == "in":
                self.placements.append(
                    (scene.item_index[lit[1]], scene.receptacle_index[lit[2]])
                )
            elif lit[0] in ("open", "closed"):
                r = scene.receptacle_index[lit[1]]
                if r not in scene.container_slot:
                    raise ValueError(f"goal {lit} names a non-container")
                self.flags.append((r, scene.container_slot[r], lit[0] == "open"))
            else:
                raise ValueError(f"unsupported goal literal {lit}")
        self.dest_of = {i: d for i, d in self.placements}

    def __call__(self, state: WorldState) -> bool:
        loc = state.item_location
        for i, d in self.placements:
            if loc[i] != d:
                return False
        for _, slot, want in self.flags:
            if state.container_open[slot] != want:
                return False
        return True

    def allowed(self, state: WorldState) -> Callable[[GroundedAction], bool]:
        """Predicate over actions worth trying from ``state``."""
        scene = self.scene
        loc = state.item_location
        unsat = {i: d for i, d in self.placements if loc[i] != d}
        need: dict[int, int] = {}
        for d in unsat.values():
            need[d] = need.get(d, 0) + 1
        occ = [0] * len(scene.receptacles)
        for r in loc:
            if r != INVENTORY:
                occ[r] += 1
        blocked = {d for d, n in need.items() if scene.capacity[d] - occ[d] < n}
        rel = set(unsat.values()) | blocked
        rel.update(loc[i] for i in unsat if loc[i] != INVENTORY)
        rel.update(r for r, _, _ in self.flags)
        rel_locs = {scene.receptacle_location[r] for r in rel}
        toggles = {r for r, _, _ in self.flags}
        held = state.held
        holding_goal = held != NOTHING and held in unsat
        holding_junk = held != NOTHING and not holding_goal

        def ok(a: GroundedAction) -> bool:
            t = a.type
            if t is ActionType.LOOK_UP or t is ActionType.LOOK_DOWN:
                return True
            if t is ActionType.NAVIGATE:
                return holding_junk or a.target in rel_locs
            if t is ActionType.OPEN:
                return a.target in rel
            if t is ActionType.CLOSE:
                return a.target in toggles
            if t is ActionType.PICKUP:
                i = pickup_candidate(scene, state, a.target)
                return i in unsat or (i != NOTHING and loc[i] in blocked and i not in self.dest_of)
            if t is ActionType.PUT:
                if held == NOTHING:
                    return False
                if holding_junk:
                    return True
                d = unsat[held]
                return a.target == d or scene.capacity[d] - occ[d] <= 0
            return True

        return ok


# --------------------------------------------------------------------------
# search


def _bfs(
    scene: SceneSpec,
    start: WorldState,
    goal: _Goal,
    actions: Sequence[GroundedAction],
    prune: bool,
    max_states: int,
) -> list[GroundedAction]:
    if goal(start):
        return []
    parent: dict[WorldState, tuple[WorldState, GroundedAction] | None] = {start: None}
    frontier = [start]
    while frontier:
        nxt = []
        for s in frontier:
            keep = goal.allowed(s) if prune else None
            for a in actions:
                if keep is not None and not keep(a):
                    continue
                if not precondition_holds(scene, s, a):
                    continue
                s2, _ = apply_action(scene, s, a)
                if s2 in parent:
                    continue
                parent[s2] = (s, a)
                if goal(s2):
                    out = []
                    cur = s2
                    while parent[cur] is not None:
                        prev, act = parent[cur]
                        out.append(act)
                        cur = prev
                    return out[::-1]
                nxt.append(s2)
            if len(parent) > max_states:
                raise PlanError(f"search exceeded {max_states} states")
        frontier = nxt
    raise Unsolvable("goal unreachable from this state")


_CACHE: "OrderedDict[tuple, Plan]" = OrderedDict()
_CACHE_SIZE = 200_000


def clear_cache() -> None:
    _CACHE.clear()


def _check_capacity(scene: SceneSpec, task: Task) -> None:
    """Reject goals that ask a receptacle to hold more than it can."""
    need: dict[str, int] = {}
    for g in task.goal:
        if g[0] == "in":
            need[g[2]] = need.get(g[2], 0) + 1
    for rid, n in need.items():
        cap = scene.capacity[scene.receptacle_index[rid]]
        if n > cap:
            raise Unsolvable(f"goal puts {n} items in {rid}, which holds {cap}")


def plan(
    scene: SceneSpec,
    state: WorldState,
    task: Task,
    actions: Sequence[GroundedAction] | None = None,
    *,
    max_states: int = DEFAULT_MAX_STATES,
) -> Plan:
    """Minimum-length plan from ``state`` to ``task``'s goal.

    Raises :class:`Unsolvable` when the goal cannot be reached.
    """
    key = None
    if actions is None:
        actions = scene_actions(scene)
        key = (id(scene), state, task.goal)
        hit = _CACHE.get(key)
        if hit is not None:
            _CACHE.move_to_end(key)
            return hit
    _check_capacity(scene, task)
    goal = _Goal(scene, task)
    try:
        steps = _bfs(scene, state, goal, actions, True, max_states)
    except Unsolvable:
        steps = _bfs(scene, state, goal, actions, False, max_states)
    result = Plan(tuple(steps))
    if key is not None:
        _CACHE[key] = result
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return result


def replan(
    scene: SceneSpec,
    state: WorldState,
    task: Task,
    actions: Sequence[GroundedAction] | None = None,
    **kw,
) -> Plan:
    """Same contract as :func:`plan`; called after every executed step."""
    return plan(scene, state, task, actions, **kw)


def full_bfs(
    scene: SceneSpec,
    state: WorldState,
    task: Task,
    actions: Sequence[GroundedAction] | None = None,
    *,
    max_states: int = DEFAULT_MAX_STATES,
) -> Plan:
    """Unpruned breadth-first search (slow; for checking small scenes)."""
    if actions is None:
        actions = scene_actions(scene)
    return Plan(tuple(_bfs(scene, state, _Goal(scene, task), actions, False, max_states)))


# --------------------------------------------------------------------------
# fixed-order search for hard tasks


def default_order(scene: SceneSpec) -> list[str]:
    """Receptacles sorted by location index, then declaration order."""
    idx = sorted(range(len(scene.receptacles)), key=lambda r: (scene.receptacle_location[r], r))
    return [scene.receptacles[r].id for r in idx]


class _Runner:
    def __init__(self, scene, state, actions):
        self.scene, self.state = scene, state
        self.steps: list[GroundedAction] = []
        self.lookup = {(a.type, a.target): a for a in actions}

    def do(self, kind: ActionType, target: int = -1):
        a = self.lookup[(kind, target)]
        self.state, ok = apply_action(self.scene, self.state, a)
        if not ok:
            raise PlanError(f"search step {a} failed")
        self.steps.append(a)

    def reach(self, r: int, open_it: bool = True):
        """Navigate to receptacle ``r``, adjust the view, open it if closed."""
        scene = self.scene
        here = scene.receptacle_location[r]
        if self.state.agent_location != here:
            self.do(ActionType.NAVIGATE, here)
        views = scene.receptacle_views[r]
        v = self.state.agent_viewpoint
        if v not in views:
            target = min(views, key=lambda w: (abs(w - v), w))
            kind = ActionType.LOOK_UP if target > v else ActionType.LOOK_DOWN
            for _ in range(abs(target - v)):
                self.do(kind)
        slot = scene.container_slot.get(r)
        if open_it and slot is not None and not self.state.container_open[slot]:
            self.do(ActionType.OPEN, r)


def search_plan(
    scene: SceneSpec,
    state: WorldState,
    task: Task,
    order: Iterable[str] | None = None,
    actions: Sequence[GroundedAction] | None = None,
) -> Plan:
    """Visit receptacles in ``order`` until the target shows up, then deliver it.

    Each visit navigates to the receptacle's location (if not already
    there), turns the view to one the receptacle admits and opens it if it
    is a closed container. The walk stops at the receptacle holding the
    target; the plan then picks it up, moves to the destination, opens it if
    needed and puts the item in. The plan is computed on the true state.
    """
    item_id, dest_id = task.search_target
    if item_id not in scene.item_index:
        raise Unsolvable(f"target {item_id!r} is not in scene {scene.name}")
    item = scene.item_index[item_id]
    dest = scene.receptacle_index[dest_id]
    order = default_order(scene) if order is None else list(order)
    run = _Runner(scene, state, actions if actions is not None else scene_actions(scene))
    where = state.item_location[item]
    if where == dest:
        return Plan(())
    if where != INVENTORY:
        if state.held != NOTHING:
            raise PlanError("search plans start with an empty hand")
        if scene.receptacles[where].id not in order:
            raise Unsolvable(f"visitation order never reaches {scene.receptacles[where].id}")
        for rid in order:
            r = scene.receptacle_index[rid]
            run.reach(r)
            if item in visible_items(scene, run.state):
                break
        run.reach(where)
        picked = pickup_candidate(scene, run.state, scene.item_category[item])
        if picked != item:
            raise PlanError(f"pick-up at {scene.receptacles[where].id} would not take {item_id}")
        run.do(ActionType.PICKUP, scene.item_category[item])
    run.reach(dest)
    run.do(ActionType.PUT, dest)
    return Plan(tuple(run.steps))


def validate_plan(
    scene: SceneSpec, state: WorldState, task: Task, plan_: "Plan | Sequence[GroundedAction]"
) -> bool:
    """True iff every step succeeds and the final state meets the goal."""
    for a in plan_:
        state, ok = apply_action(scene, state, a)
        if not ok:
            return False
    return goal_satisfied(scene, task, state)


def execute(scene: SceneSpec, state: WorldState, plan_: Iterable[GroundedAction]) -> WorldState:
    for a in plan_:
        state, ok = apply_action(scene, state, a)
        if not ok:
            raise PlanError(f"plan step {a} failed")
    return state
