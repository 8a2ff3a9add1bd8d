"""Domain and problem files for the STRIPS subset.

The grammar is documented in ``docs/strips-grammar.md``. In short: typed
parameters, conjunctive preconditions over positive and negated atoms,
add/delete effects, no conditional effects and no quantifiers. Two
non-standard action keys are accepted: ``:kind`` names the agent-level
action type and ``:argument`` names the parameter that becomes the action's
argument after merging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..domain import ActionType, TaskLevel
from .sexpr import Atom, SList, StripsSyntaxError, read

Fact = tuple  # (predicate, obj, ...)
FactSet = frozenset


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[str, ...]
    negated: bool = False

    def __str__(self):
        core = "(" + " ".join((self.predicate,) + self.args) + ")"
        return f"(not {core})" if self.negated else core

    @property
    def atom(self) -> Fact:
        return (self.predicate,) + self.args


@dataclass(frozen=True)
class ActionSchema:
    name: str
    kind: ActionType
    parameters: tuple[tuple[str, str], ...]
    argument: str | None
    preconditions: tuple[Literal, ...]
    add_effects: tuple[Literal, ...]
    delete_effects: tuple[Literal, ...]
    line: int = 0


@dataclass
class Domain:
    name: str
    types: dict[str, str]  # type -> parent
    constants: dict[str, str]
    predicates: dict[str, tuple[str, ...]]
    schemas: tuple[ActionSchema, ...] = ()

    def __iter__(self):
        return iter(self.schemas)

    def __len__(self):
        return len(self.schemas)

    def is_subtype(self, sub: str, sup: str) -> bool:
        seen = set()
        while sub not in seen:
            if sub == sup:
                return True
            seen.add(sub)
            if sub not in self.types:
                return False
            sub = self.types[sub]
        return False

    @property
    def static_predicates(self) -> frozenset[str]:
        """Predicates no action ever adds or deletes."""
        touched = {
            lit.predicate
            for s in self.schemas
            for lit in s.add_effects + s.delete_effects
        }
        return frozenset(p for p in self.predicates if p not in touched)


@dataclass
class Problem:
    name: str
    domain: str
    objects: dict[str, str]
    init: FactSet
    goal: tuple[Literal, ...]
    scene: str | None = None
    level: TaskLevel | None = None
    description: str = ""
    toggle: str | None = None
    row: str = ""
    extras: dict = field(default_factory=dict)


def _err(node, message: str) -> StripsSyntaxError:
    return StripsSyntaxError(message, getattr(node, "line", 0), getattr(node, "col", 0))


def _atom(node, what: str) -> str:
    if not isinstance(node, Atom) or node.quoted:
        raise _err(node, f"expected {what}")
    return node.text


def _list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise _err(node, f"expected {what}")
    return node


def _typed_list(node: SList, *, variables: bool) -> list[tuple[str, str, Atom]]:
    out: list[tuple[str, str, Atom]] = []
    pending: list[Atom] = []
    items = list(node.items)
    k = 0
    while k < len(items):
        tok = items[k]
        name = _atom(tok, "name")
        if name == "-":
            if k + 1 >= len(items) or not pending:
                raise _err(tok, "dangling type marker '-'")
            typ = _atom(items[k + 1], "type name")
            if typ.startswith("?") or typ.startswith(":"):
                raise _err(items[k + 1], f"bad type name {typ!r}")
            out.extend((p.text, typ, p) for p in pending)
            pending = []
            k += 2
            continue
        if variables != name.startswith("?"):
            kind = "variable" if variables else "object name"
            raise _err(tok, f"expected {kind}, got {name!r}")
        if name.startswith(":"):
            raise _err(tok, f"unexpected keyword {name!r}")
        pending.append(tok)
        k += 1
    out.extend((p.text, "object", p) for p in pending)
    return out


def _header(node: SList, keyword: str) -> str:
    if len(node) != 2 or _atom(node[0], keyword) != keyword:
        raise _err(node, f"expected ({keyword} NAME)")
    return _atom(node[1], "name")


def _define(text: str, kind: str) -> tuple[str, list]:
    exprs = read(text)
    if len(exprs) != 1:
        node = exprs[1] if len(exprs) > 1 else None
        raise _err(node, "expected exactly one (define ...) form")
    top = _list(exprs[0], "(define ...)")
    if len(top) < 2 or _atom(top[0], "define") != "define":
        raise _err(top, "expected (define ...)")
    name = _header(_list(top[1], f"({kind} NAME)"), kind)
    return name, list(top.items[2:])


# --------------------------------------------------------------------------
# domain


def parse_domain(text: str) -> Domain:
    """Parse a domain file. Schemas keep declaration order."""
    name, sections = _define(text, "domain")
    domain = Domain(name=name, types={}, constants={}, predicates={})
    schemas: list[ActionSchema] = []
    for sec in sections:
        sec = _list(sec, "a domain section")
        if not sec.items:
            raise _err(sec, "empty section")
        key = _atom(sec[0], "section keyword")
        body = SList(sec.items[1:], sec.line, sec.col)
        if key == ":requirements":
            for req in body:
                if _atom(req, "requirement") not in (":strips", ":typing", ":negative-preconditions"):
                    raise _err(req, f"unsupported requirement {req.text!r}")
        elif key == ":types":
            for t, parent, tok in _typed_list(body, variables=False):
                if t in domain.types or t == "object":
                    raise _err(tok, f"type {t!r} declared twice")
                domain.types[t] = parent
            for t, parent in domain.types.items():
                if parent != "object" and parent not in domain.types:
                    raise _err(sec, f"unknown parent type {parent!r}")
        elif key == ":constants":
            for c, typ, tok in _typed_list(body, variables=False):
                _check_type(domain, typ, tok)
                if c in domain.constants:
                    raise _err(tok, f"constant {c!r} declared twice")
                domain.constants[c] = typ
        elif key == ":predicates":
            for pdecl in body:
                pdecl = _list(pdecl, "predicate declaration")
                if not pdecl.items:
                    raise _err(pdecl, "empty predicate declaration")
                pname = _atom(pdecl[0], "predicate name")
                if pname in domain.predicates:
                    raise _err(pdecl, f"predicate {pname!r} declared twice")
                params = _typed_list(SList(pdecl.items[1:], pdecl.line, pdecl.col), variables=True)
                for _, typ, tok in params:
                    _check_type(domain, typ, tok)
                domain.predicates[pname] = tuple(t for _, t, _ in params)
        elif key == ":action":
            schema = _parse_action(domain, body)
            if any(s.name == schema.name for s in schemas):
                raise _err(body, f"duplicate action schema {schema.name!r}")
            schemas.append(schema)
        else:
            raise _err(sec[0], f"unknown domain section {key!r}")
    domain.schemas = tuple(schemas)
    return domain


def _check_type(domain: Domain, typ: str, tok) -> None:
    if typ != "object" and typ not in domain.types:
        raise _err(tok, f"unknown type {typ!r}")


def _parse_action(domain: Domain, body: SList) -> ActionSchema:
    if not body.items:
        raise _err(body, "action without a name")
    name = _atom(body[0], "action name")
    fields: dict[str, object] = {}
    k = 1
    while k < len(body.items):
        key = _atom(body[k], "action keyword")
        if key not in (":parameters", ":precondition", ":effect", ":kind", ":argument"):
            raise _err(body[k], f"unknown action keyword {key!r}")
        if key in fields:
            raise _err(body[k], f"{key} given twice")
        if k + 1 >= len(body.items):
            raise _err(body[k], f"{key} without a value")
        fields[key] = body[k + 1]
        k += 2
    if ":kind" not in fields:
        raise _err(body, f"action {name!r} lacks :kind")
    try:
        kind = ActionType.from_label(_atom(fields[":kind"], "action kind"))
    except ValueError as exc:
        raise _err(fields[":kind"], str(exc)) from None
    params: list[tuple[str, str]] = []
    if ":parameters" in fields:
        plist = _list(fields[":parameters"], "parameter list")
        for var, typ, tok in _typed_list(plist, variables=True):
            _check_type(domain, typ, tok)
            if any(v == var for v, _ in params):
                raise _err(tok, f"parameter {var} declared twice")
            params.append((var, typ))
    ptypes = dict(params)
    argument = None
    if ":argument" in fields:
        argument = _atom(fields[":argument"], "argument variable")
        if argument not in ptypes:
            raise _err(fields[":argument"], f"unbound variable {argument}")
    pre = _conjunction(domain, fields.get(":precondition"), ptypes, allow_neg=True)
    eff = _conjunction(domain, fields.get(":effect"), ptypes, allow_neg=True)
    add = tuple(l for l in eff if not l.negated)
    dele = tuple(Literal(l.predicate, l.args) for l in eff if l.negated)
    clash = {l.atom for l in add} & {l.atom for l in dele}
    if clash:
        raise _err(body, f"action {name!r} both adds and deletes {sorted(clash)[0]}")
    return ActionSchema(name, kind, tuple(params), argument, pre, add, dele, body.line)


def _conjunction(domain, node, variables: dict[str, str] | None, *, allow_neg: bool, objects=None):
    if node is None:
        return ()
    node = _list(node, "formula")
    if not node.items:
        return ()
    head = node[0]
    if isinstance(head, Atom) and head.text == "and":
        return tuple(_literal(domain, sub, variables, allow_neg, objects) for sub in node.items[1:])
    return (_literal(domain, node, variables, allow_neg, objects),)


def _literal(domain: Domain, node, variables, allow_neg: bool, objects) -> Literal:
    node = _list(node, "literal")
    if not node.items:
        raise _err(node, "empty literal")
    head = _atom(node[0], "predicate")
    if head == "not":
        if not allow_neg or len(node) != 2:
            raise _err(node, "malformed negation")
        inner = _literal(domain, node[1], variables, False, objects)
        return Literal(inner.predicate, inner.args, True)
    if head in ("and", "or", "forall", "exists", "when", "imply"):
        raise _err(node, f"{head!r} is outside the supported STRIPS subset")
    if head not in domain.predicates:
        raise _err(node, f"undeclared predicate {head!r}")
    sig = domain.predicates[head]
    args = node.items[1:]
    if len(args) != len(sig):
        raise _err(node, f"predicate {head!r} takes {len(sig)} arguments, got {len(args)}")
    names = []
    for tok, want in zip(args, sig):
        term = _atom(tok, "term")
        if term.startswith("?"):
            if variables is None:
                raise _err(tok, f"variable {term} in ground formula")
            if term not in variables:
                raise _err(tok, f"unbound variable {term}")
            have = variables[term]
        elif term in domain.constants:
            have = domain.constants[term]
        elif objects is not None and term in objects:
            have = objects[term]
        else:
            raise _err(tok, f"undeclared object {term!r}")
        if not domain.is_subtype(have, want):
            raise _err(tok, f"type mismatch: {term} is {have}, {head} expects {want}")
        names.append(term)
    return Literal(head, tuple(names))


# --------------------------------------------------------------------------
# problem


def parse_problem(text: str, domain: Domain) -> Problem:
    """Parse a problem file against ``domain``."""
    name, sections = _define(text, "problem")
    prob = Problem(name=name, domain="", objects={}, init=frozenset(), goal=())
    objects: dict[str, str] = dict(domain.constants)
    init_node = goal_node = None
    for sec in sections:
        sec = _list(sec, "a problem section")
        if not sec.items:
            raise _err(sec, "empty section")
        key = _atom(sec[0], "section keyword")
        rest = sec.items[1:]
        if key == ":domain":
            prob.domain = _atom(rest[0], "domain name") if len(rest) == 1 else ""
            if prob.domain != domain.name:
                raise _err(sec, f"problem is for domain {prob.domain!r}, not {domain.name!r}")
        elif key == ":objects":
            for obj, typ, tok in _typed_list(SList(rest, sec.line, sec.col), variables=False):
                _check_type(domain, typ, tok)
                if obj in objects:
                    raise _err(tok, f"object {obj!r} declared twice")
                objects[obj] = typ
        elif key == ":init":
            init_node = SList(rest, sec.line, sec.col)
        elif key == ":goal":
            if len(rest) != 1:
                raise _err(sec, "(:goal FORMULA) takes one formula")
            goal_node = rest[0]
        elif key in (":scene", ":level", ":toggle", ":description", ":row"):
            if len(rest) != 1 or not isinstance(rest[0], Atom):
                raise _err(sec, f"({key} VALUE) takes one value")
            value = rest[0].text
            if key == ":scene":
                prob.scene = value
            elif key == ":level":
                try:
                    prob.level = TaskLevel.parse(value)
                except ValueError as exc:
                    raise _err(rest[0], str(exc)) from None
            elif key == ":toggle":
                prob.toggle = value
            elif key == ":description":
                prob.description = value
            else:
                prob.row = value
        else:
            raise _err(sec[0], f"unknown problem section {key!r}")
    if goal_node is None:
        raise StripsSyntaxError("problem has no (:goal ...)")
    prob.objects = {k: v for k, v in objects.items() if k not in domain.constants}
    facts = set()
    for atom in init_node or ():
        lit = _literal(domain, atom, None, False, objects)
        facts.add(lit.atom)
    prob.init = frozenset(facts)
    prob.goal = _conjunction(domain, goal_node, None, allow_neg=True, objects=objects)
    if prob.toggle is not None and prob.toggle not in objects:
        raise _err(init_node, f"toggle names undeclared object {prob.toggle!r}")
    return prob
