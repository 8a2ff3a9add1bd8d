"""Grounding against a scene, and WorldState <-> fact-set conversion."""

from __future__ import annotations

from dataclasses import dataclass

from ..domain import (
    HEADINGS,
    INVENTORY,
    NOTHING,
    VIEWPOINTS,
    ActionType,
    GroundedAction,
    SceneSpec,
    WorldState,
)
from .parser import ActionSchema, Domain, FactSet

VIEW_NAMES = ("v-down", "v-level", "v-up")


class GroundingError(ValueError):
    pass


class FactError(ValueError):
    """A fact set does not describe a legal world state."""


def heading_name(k: int) -> str:
    return f"h{HEADINGS[k]}"


def count_name(n: int) -> str:
    return f"c{n}"


@dataclass(frozen=True)
class GroundOperator:
    schema: str
    bindings: tuple[tuple[str, str], ...]
    pre_pos: frozenset
    pre_neg: frozenset
    add: frozenset
    delete: frozenset

    def applicable(self, facts: FactSet) -> bool:
        return self.pre_pos <= facts and not (self.pre_neg & facts)

    def apply(self, facts: FactSet) -> FactSet:
        return (facts - self.delete) | self.add

    def __str__(self):
        return f"({self.schema} {' '.join(o for _, o in self.bindings)})"


# --------------------------------------------------------------------------
# scene as a STRIPS problem


def scene_objects(scene: SceneSpec) -> dict[str, str]:
    """Typed objects in declaration order (dicts keep insertion order)."""
    objs: dict[str, str] = {}
    for loc in scene.locations:
        objs[loc.id] = "location"
    for r in scene.receptacles:
        objs[r.id] = "container" if r.is_container else "surface"
    for it in scene.items:
        objs[it.id] = "item"
    for k in range(len(HEADINGS)):
        objs[heading_name(k)] = "heading"
    for n in range(max(scene.capacity, default=0) + 1):
        objs[count_name(n)] = "count"
    return objs


def static_facts(scene: SceneSpec) -> FactSet:
    facts = set()
    for r in scene.receptacles:
        facts.add(("receptacle-at", r.id, r.location))
        for v in r.views:
            facts.add(("view-ok", r.id, VIEW_NAMES[v]))
    for loc in scene.locations:
        facts.add(("heading-of", loc.id, heading_name(loc.heading)))
    for n in range(max(scene.capacity, default=0)):
        facts.add(("succ", count_name(n), count_name(n + 1)))
    for lo, hi in zip(VIEW_NAMES, VIEW_NAMES[1:]):
        facts.add(("view-above", lo, hi))
    return frozenset(facts)


def state_to_facts(scene: SceneSpec, state: WorldState) -> FactSet:
    """Static scene facts plus the dynamic facts describing ``state``."""
    facts = set(static_facts(scene))
    if scene.locations:
        facts.add(("at-loc", scene.locations[state.agent_location].id))
    facts.add(("facing", heading_name(state.agent_rotation)))
    facts.add(("view", VIEW_NAMES[state.agent_viewpoint]))
    if state.held == NOTHING:
        facts.add(("handempty",))
    occ = [0] * len(scene.receptacles)
    for i, r in enumerate(state.item_location):
        if r == INVENTORY:
            facts.add(("holding", scene.items[i].id))
        else:
            facts.add(("in", scene.items[i].id, scene.receptacles[r].id))
            occ[r] += 1
    for k, r in enumerate(scene.receptacles):
        facts.add(("free", r.id, count_name(r.capacity - occ[k])))
        if r.is_container:
            is_open = state.container_open[scene.container_slot[k]]
            facts.add(("open" if is_open else "closed", r.id))
            if is_open:
                facts.add(("accessible", r.id))
        else:
            facts.add(("accessible", r.id))
    return frozenset(facts)


def facts_to_state(facts: FactSet, scene: SceneSpec) -> WorldState:
    """Rebuild a WorldState, rejecting fact sets that break world invariants."""
    by_pred: dict[str, list[tuple]] = {}
    for f in facts:
        by_pred.setdefault(f[0], []).append(f[1:])

    def single(pred):
        vals = by_pred.get(pred, [])
        if len(vals) != 1:
            raise FactError(f"expected exactly one ({pred} ...) fact, found {len(vals)}")
        return vals[0]

    if scene.locations:
        (loc,) = single("at-loc")
        if loc not in scene.location_index:
            raise FactError(f"unknown location {loc!r}")
        agent_loc = scene.location_index[loc]
    else:
        agent_loc = 0
    (h,) = single("facing")
    (v,) = single("view")
    try:
        rot = [heading_name(k) for k in range(4)].index(h)
        view = VIEW_NAMES.index(v)
    except ValueError:
        raise FactError(f"bad pose facts facing={h!r} view={v!r}") from None
    where: dict[str, str] = {}
    for item, rec in by_pred.get("in", []):
        if item in where:
            raise FactError(f"item {item!r} asserted in two places")
        if item not in scene.item_index or rec not in scene.receptacle_index:
            raise FactError(f"unknown object in (in {item} {rec})")
        where[item] = rec
    held = by_pred.get("holding", [])
    if len(held) > 1:
        raise FactError("more than one held item")
    handempty = bool(by_pred.get("handempty"))
    if handempty == bool(held):
        raise FactError("handempty must hold exactly when nothing is held")
    locs = []
    held_idx = NOTHING
    for k, it in enumerate(scene.items):
        if held and held[0][0] == it.id:
            if it.id in where:
                raise FactError(f"item {it.id!r} both held and placed")
            locs.append(INVENTORY)
            held_idx = k
        elif it.id in where:
            locs.append(scene.receptacle_index[where[it.id]])
        else:
            raise FactError(f"item {it.id!r} has no location")
    opened = set(o for (o,) in by_pred.get("open", []))
    closed = set(c for (c,) in by_pred.get("closed", []))
    flags = []
    for r in scene.containers:
        rid = scene.receptacles[r].id
        if (rid in opened) == (rid in closed):
            raise FactError(f"container {rid!r} must be exactly one of open/closed")
        flags.append(rid in opened)
    state = WorldState(tuple(locs), tuple(flags), agent_loc, rot, view, held_idx)
    if state_to_facts(scene, state) != frozenset(facts):
        extra = sorted(map(str, set(facts) - state_to_facts(scene, state)))[:3]
        missing = sorted(map(str, state_to_facts(scene, state) - set(facts)))[:3]
        raise FactError(f"inconsistent fact set (extra {extra}, missing {missing})")
    return state


# --------------------------------------------------------------------------
# grounding


def _ground_schema(
    domain: Domain,
    schema: ActionSchema,
    objects: dict[str, str],
    static: FactSet,
    static_preds: frozenset[str],
):
    params = schema.parameters
    index = {var: k for k, (var, _) in enumerate(params)}
    candidates = [
        [o for o, t in objects.items() if domain.is_subtype(t, typ)] for _, typ in params
    ]
    # static literal -> last parameter position it depends on
    checks: list[list] = [[] for _ in params] or [[]]
    pre_static = []
    for lit in schema.preconditions:
        if lit.predicate in static_preds:
            last = max((index[a] for a in lit.args if a in index), default=-1)
            if last < 0:
                pre_static.append(lit)
            else:
                checks[last].append(lit)

    def subst(lit, env):
        return (lit.predicate,) + tuple(env.get(a, a) for a in lit.args)

    for lit in pre_static:
        if (subst(lit, {}) in static) == lit.negated:
            return

    env: dict[str, str] = {}

    def rec(k):
        if k == len(params):
            yield dict(env)
            return
        var = params[k][0]
        for obj in candidates[k]:
            env[var] = obj
            if all((subst(l, env) in static) != l.negated for l in checks[k]):
                yield from rec(k + 1)
        env.pop(var, None)

    for binding in rec(0):
        pre_pos = frozenset(
            subst(l, binding)
            for l in schema.preconditions
            if not l.negated and l.predicate not in static_preds
        )
        pre_neg = frozenset(
            subst(l, binding)
            for l in schema.preconditions
            if l.negated and l.predicate not in static_preds
        )
        if pre_pos & pre_neg:
            continue
        yield binding, GroundOperator(
            schema=schema.name,
            bindings=tuple((v, binding[v]) for v, _ in params),
            pre_pos=pre_pos,
            pre_neg=pre_neg,
            add=frozenset(subst(l, binding) for l in schema.add_effects),
            delete=frozenset(subst(l, binding) for l in schema.delete_effects),
        )


def _merge_target(scene: SceneSpec, kind: ActionType, arg: str | None) -> tuple[str | None, int]:
    if kind in (ActionType.LOOK_UP, ActionType.LOOK_DOWN):
        if arg is not None:
            raise GroundingError(f"{kind.label} takes no argument")
        return None, -1
    if arg is None:
        raise GroundingError(f"{kind.label} schema needs an :argument")
    if kind is ActionType.NAVIGATE:
        if arg not in scene.location_index:
            raise GroundingError(f"navigate argument {arg!r} is not a location")
        k = scene.location_index[arg]
        return scene.receptacles[scene.location_members[k][0]].id, k
    if kind is ActionType.PICKUP:
        if arg not in scene.item_index:
            raise GroundingError(f"pickup argument {arg!r} is not an item")
        cat = scene.item_category[scene.item_index[arg]]
        return scene.items[scene.category_members[cat][0]].id, cat
    if arg not in scene.receptacle_index:
        raise GroundingError(f"{kind.label} argument {arg!r} is not a receptacle")
    return arg, scene.receptacle_index[arg]


def ground(domain: Domain, scene: SceneSpec) -> tuple[GroundedAction, ...]:
    """All agent-level actions of ``scene``, merged and ordered.

    Every type-legal binding whose static preconditions hold becomes an
    operator. Operators are grouped by (action type, merged argument):
    navigation targets collapse to their location's first receptacle and
    pick-ups to their category's first item. Actions are ordered by type,
    then by target index; ordinals follow that order.
    """
    objects = scene_objects(scene)
    for c, t in domain.constants.items():
        objects.setdefault(c, t)
    static = static_facts(scene)
    static_preds = domain.static_predicates
    groups: dict[tuple[ActionType, int], tuple[str | None, list[GroundOperator]]] = {}
    for schema in domain.schemas:
        for binding, op in _ground_schema(domain, schema, objects, static, static_preds):
            raw = binding[schema.argument] if schema.argument else None
            arg, target = _merge_target(scene, schema.kind, raw)
            key = (schema.kind, target)
            groups.setdefault(key, (arg, []))[1].append(op)
    out = []
    for ordinal, key in enumerate(sorted(groups)):
        arg, ops = groups[key]
        out.append(GroundedAction(ordinal, key[0], arg, key[1], tuple(ops)))
    return tuple(out)


def strips_applicable(action: GroundedAction, facts: FactSet) -> bool:
    return any(op.applicable(facts) for op in action.operators)


def strips_apply(action: GroundedAction, facts: FactSet) -> tuple[FactSet, bool]:
    """Apply the first applicable operator of ``action``."""
    for op in action.operators:
        if op.applicable(facts):
            return op.apply(facts), True
    return facts, False


def count_by_type(actions) -> dict[ActionType, int]:
    out = {t: 0 for t in ActionType}
    for a in actions:
        out[a.type] += 1
    return out

