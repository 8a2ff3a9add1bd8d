"""STRIPS-subset planning language: parsing, grounding, fact conversion."""

import weakref
from importlib import resources

from .grounding import (
    FactError,
    GroundingError,
    GroundOperator,
    facts_to_state,
    ground,
    scene_objects,
    state_to_facts,
    static_facts,
    strips_applicable,
    strips_apply,
)
from .parser import ActionSchema, Domain, FactSet, Literal, Problem, parse_domain, parse_problem
from .sexpr import StripsSyntaxError

__all__ = [
    "ActionSchema",
    "Domain",
    "FactError",
    "FactSet",
    "GroundOperator",
    "GroundingError",
    "Literal",
    "Problem",
    "StripsSyntaxError",
    "facts_to_state",
    "ground",
    "kitchen_domain",
    "parse_domain",
    "parse_problem",
    "scene_actions",
    "scene_objects",
    "state_to_facts",
    "static_facts",
    "strips_applicable",
    "strips_apply",
]

_DOMAIN_CACHE = {}


def kitchen_domain() -> Domain:
    """The shipped kitchen domain."""
    if "kitchen" not in _DOMAIN_CACHE:
        text = resources.files("srkitchen.data").joinpath("kitchen.strips").read_text("utf-8")
        _DOMAIN_CACHE["kitchen"] = parse_domain(text)
    return _DOMAIN_CACHE["kitchen"]


_ACTIONS_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def scene_actions(scene) -> tuple:
    """Grounded action set of ``scene`` under the kitchen domain (cached)."""
    acts = _ACTIONS_CACHE.get(scene)
    if acts is None:
        acts = ground(kitchen_domain(), scene)
        _ACTIONS_CACHE[scene] = acts
    return acts
