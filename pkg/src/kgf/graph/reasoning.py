"""Subclass closure, existential restriction entailment and Horn-rule chaining.

Rules use a small s-expression syntax, one rule per top-level form::

    ; high-risk pancreatic patients
    (=> (and (kg:Patient ?p)
             (kg:hasAttribute ?p ?ca) (kg:CA19_9 ?ca) (kg:indicates ?ca ?v1)
             (greaterThan ?v1 1000))
        (kg:HighRiskPatient ?p))

A one-argument atom is a class atom, a two-argument atom is a property atom,
and ``greaterThan`` / ``lessThan`` / ``equal`` are numeric builtins. ``;``
starts a comment. Arguments are ``?variables``, prefixed names, ``<iri>``,
numbers or ``"strings"``.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from kgf.errors import KgfError
from kgf.graph.store import TYPE, GraphStore
from kgf.graph.terms import IRI, Datatype, Literal, Node, RdfTriple
from kgf.iri import DEFAULT_PREFIXES, expand
from kgf.ontology import DeclKind, RestrictionAxiom, SchemaDecl, check_acyclic

logger = logging.getLogger(__name__)


class RuleSyntaxError(KgfError):
    pass


# -- subclass closure ---------------------------------------------------------

class SubclassClosure:
    """Reflexive-transitive subclass relation; equivalence counts both ways."""

    def __init__(self, supers: Mapping[str, frozenset[str]]):
        self._supers = dict(supers)
        subs: dict[str, set[str]] = defaultdict(set)
        for c, ups in self._supers.items():
            for u in ups:
                subs[u].add(c)
        self._subs = {k: frozenset(v) for k, v in subs.items()}

    def supers(self, cls: str) -> frozenset[str]:
        return self._supers.get(cls, frozenset({cls}))

    def subs(self, cls: str) -> frozenset[str]:
        return self._subs.get(cls, frozenset({cls}))

    def is_subclass(self, sub: str, sup: str) -> bool:
        return sup in self.supers(sub)

    def pairs(self, *, reflexive: bool = False) -> set[tuple[str, str]]:
        return {(c, u) for c, ups in self._supers.items() for u in ups if reflexive or c != u}

    def classes(self) -> frozenset[str]:
        return frozenset(self._supers)


def subclass_closure(schema: Iterable[SchemaDecl]) -> SubclassClosure:
    decls = list(schema)
    check_acyclic(decls)
    edges: dict[str, set[str]] = defaultdict(set)
    classes: set[str] = set()
    for d in decls:
        if d.kind is DeclKind.CLASS:
            classes.add(d.subject)
        elif d.kind is DeclKind.SUBCLASS_OF and d.object:
            edges[d.subject].add(d.object)
            classes.update((d.subject, d.object))
        elif d.kind is DeclKind.EQUIVALENT_CLASS and d.object:
            edges[d.subject].add(d.object)
            edges[d.object].add(d.subject)
            classes.update((d.subject, d.object))
        elif d.kind is DeclKind.DOMAIN_RANGE:
            classes.update(x for x in (d.domain, d.range) if x)
    supers = {}
    for c in classes:
        seen = {c}
        stack = [c]
        while stack:
            for nxt in edges.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        supers[c] = frozenset(seen)
    return SubclassClosure(supers)


def has_type(store: GraphStore, node: Node, cls: str, closure: SubclassClosure) -> bool:
    return any(closure.is_subclass(t, cls) for t in store.types_of(node))


def instances_of(store: GraphStore, cls: str, closure: SubclassClosure) -> set[IRI]:
    out: set[IRI] = set()
    for sub in closure.subs(cls):
        out |= store.subjects(TYPE, IRI(sub))
    return out


# -- restrictions -------------------------------------------------------------

def _restriction_round(store: GraphStore, axioms: Sequence[RestrictionAxiom],
                       closure: SubclassClosure) -> set[RdfTriple]:
    new = set()
    for ax in axioms:
        prop = IRI(ax.prop)
        for x in instances_of(store, ax.cls, closure):
            if any(has_type(store, y, ax.filler, closure) for y in store.objects(x, prop)):
                t = RdfTriple(x, TYPE, IRI(ax.sup))
                if t not in store:
                    new.add(t)
    return new


def apply_restrictions(store: GraphStore, axioms: Optional[Sequence[RestrictionAxiom]] = None,
                       closure: Optional[SubclassClosure] = None) -> set[RdfTriple]:
    """Infer ``x a Sup`` for ``x a Cls`` with a ``prop`` edge to a ``Filler``; repeat to a fixpoint."""
    axioms = list(store.restrictions if axioms is None else axioms)
    closure = closure or subclass_closure(store.schema)
    inferred: set[RdfTriple] = set()
    while True:
        new = _restriction_round(store, axioms, closure)
        if not new:
            return inferred
        store.update(new)
        inferred |= new


# -- rules --------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class RuleVar:
    name: str


Arg = Union[RuleVar, IRI, Literal]


@dataclass(frozen=True)
class ClassAtom:
    cls: str
    arg: Arg


@dataclass(frozen=True)
class PropertyAtom:
    prop: str
    subject: Arg
    object: Arg


@dataclass(frozen=True)
class Builtin:
    name: str
    left: Arg
    right: Arg


Atom = Union[ClassAtom, PropertyAtom, Builtin]

BUILTINS = {
    "greaterThan": lambda a, b: a > b,
    "lessThan": lambda a, b: a < b,
    "equal": lambda a, b: a == b,
}


def _vars(atom: Atom) -> set[str]:
    if isinstance(atom, ClassAtom):
        args = (atom.arg,)
    elif isinstance(atom, PropertyAtom):
        args = (atom.subject, atom.object)
    else:
        args = (atom.left, atom.right)
    return {a.name for a in args if isinstance(a, RuleVar)}


@dataclass(frozen=True)
class SwrlRule:
    body: tuple[Atom, ...]
    head: ClassAtom
    name: str = ""

    def __post_init__(self):
        if not self.body:
            raise RuleSyntaxError("rule body must not be empty")
        if not isinstance(self.head, ClassAtom):
            raise RuleSyntaxError("rule head must be a class atom")
        body_vars = set().union(*(_vars(a) for a in self.body if not isinstance(a, Builtin)))
        missing = _vars(self.head) - body_vars
        if missing:
            raise RuleSyntaxError(f"head variables {sorted(missing)} do not occur in the body")
        for b in self.body:
            if isinstance(b, Builtin) and _vars(b) - body_vars:
                raise RuleSyntaxError(f"builtin {b.name} uses unbound variables")


_SX_TOKEN = re.compile(r'\s+|;[^\n]*|(\()|(\))|("(?:[^"\\]|\\.)*")|(<[^>\s]*>)|([^\s()";]+)')


def _sexprs(text: str) -> list:
    stack: list[list] = [[]]
    pos = 0
    while pos < len(text):
        m = _SX_TOKEN.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r} at position {pos}")
        pos = m.end()
        lp, rp, string, iri, atom = m.groups()
        if lp:
            stack.append([])
        elif rp:
            if len(stack) == 1:
                raise RuleSyntaxError(f"unbalanced ')' at position {m.start()}")
            done = stack.pop()
            stack[-1].append(done)
        elif string or iri or atom:
            stack[-1].append(string or iri or atom)
    if len(stack) != 1:
        raise RuleSyntaxError("unbalanced '(' at end of input")
    return stack[0]


def _arg(token, prefixes: Mapping[str, str]) -> Arg:
    if isinstance(token, list):
        raise RuleSyntaxError(f"nested expression {token} is not a valid argument")
    if token.startswith("?"):
        return RuleVar(token[1:])
    if token.startswith('"'):
        return Literal(bytes(token[1:-1], "utf-8").decode("unicode_escape"))
    if re.fullmatch(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)", token):
        return Literal(token, Datatype.DECIMAL)
    if token in ("true", "false"):
        return Literal(token, Datatype.BOOLEAN)
    try:
        return IRI(expand(token, dict(prefixes)))
    except ValueError as exc:
        raise RuleSyntaxError(str(exc)) from None


def _atom(form, prefixes: Mapping[str, str]) -> Atom:
    if not isinstance(form, list) or not form or isinstance(form[0], list):
        raise RuleSyntaxError(f"malformed atom {form!r}")
    name, args = form[0], form[1:]
    local = name.split(":", 1)[1] if name.startswith("swrlb:") else name
    if local in BUILTINS:
        if len(args) != 2:
            raise RuleSyntaxError(f"builtin {local} takes two arguments")
        return Builtin(local, _arg(args[0], prefixes), _arg(args[1], prefixes))
    try:
        pred = expand(name, dict(prefixes))
    except ValueError as exc:
        raise RuleSyntaxError(str(exc)) from None
    if len(args) == 1:
        return ClassAtom(pred, _arg(args[0], prefixes))
    if len(args) == 2:
        return PropertyAtom(pred, _arg(args[0], prefixes), _arg(args[1], prefixes))
    raise RuleSyntaxError(f"atom {name} must have one or two arguments")


def parse_rules(text: str, prefixes: Optional[Mapping[str, str]] = None) -> list[SwrlRule]:
    prefixes = dict(DEFAULT_PREFIXES if prefixes is None else prefixes)
    rules = []
    for i, form in enumerate(_sexprs(text)):
        if not isinstance(form, list) or len(form) != 3 or form[0] != "=>":
            raise RuleSyntaxError(f"rule {i + 1}: expected (=> body head)")
        body_form, head_form = form[1], form[2]
        if isinstance(body_form, list) and body_form and body_form[0] == "and":
            body = tuple(_atom(a, prefixes) for a in body_form[1:])
        else:
            body = (_atom(body_form, prefixes),)
        head = _atom(head_form, prefixes)
        if not isinstance(head, ClassAtom):
            raise RuleSyntaxError(f"rule {i + 1}: head must be a class atom")
        rules.append(SwrlRule(body, head, name=f"rule{i + 1}"))
    return rules


def load_rules(path: str | Path, prefixes: Optional[Mapping[str, str]] = None) -> list[SwrlRule]:
    return parse_rules(Path(path).read_text(encoding="utf-8"), prefixes)


def _value(arg: Arg, binding: Mapping[str, Node]) -> Optional[Node]:
    return binding.get(arg.name) if isinstance(arg, RuleVar) else arg


def _numeric(node: Optional[Node]) -> Optional[Decimal]:
    return node.numeric if isinstance(node, Literal) else None


def _bind(arg: Arg, value: Node, binding: dict) -> Optional[dict]:
    if isinstance(arg, RuleVar):
        cur = binding.get(arg.name)
        if cur is None:
            out = dict(binding)
            out[arg.name] = value
            return out
        return binding if cur == value else None
    return binding if arg == value else None


def _solve(atoms: Sequence[Atom], store: GraphStore, closure: SubclassClosure,
           binding: dict) -> Iterator[dict]:
    if not atoms:
        yield binding
        return
    # builtins run as soon as their arguments are bound
    for i, atom in enumerate(atoms):
        if isinstance(atom, Builtin) and _vars(atom) <= set(binding):
            a, b = _numeric(_value(atom.left, binding)), _numeric(_value(atom.right, binding))
            if a is None or b is None or not BUILTINS[atom.name](a, b):
                return
            yield from _solve(atoms[:i] + atoms[i + 1:], store, closure, binding)
            return
    atom, rest = atoms[0], atoms[1:]
    if isinstance(atom, Builtin):
        # unbound builtin arguments: defer behind the remaining atoms
        yield from _solve(tuple(rest) + (atom,), store, closure, binding)
        return
    if isinstance(atom, ClassAtom):
        node = _value(atom.arg, binding)
        if node is not None:
            if has_type(store, node, atom.cls, closure):
                yield from _solve(rest, store, closure, binding)
            return
        for x in sorted(instances_of(store, atom.cls, closure), key=lambda n: n.value):
            yield from _solve(rest, store, closure, _bind(atom.arg, x, binding))
        return
    s = _value(atom.subject, binding)
    o = _value(atom.object, binding)
    if isinstance(s, Literal):
        return
    for triple in store.match(s, IRI(atom.prop), o):
        b = _bind(atom.subject, triple.subject, binding)
        if b is not None:
            b = _bind(atom.object, triple.object, b)
        if b is not None:
            yield from _solve(rest, store, closure, b)


def rule_matches(rule: SwrlRule, store: GraphStore, closure: SubclassClosure) -> set[RdfTriple]:
    out = set()
    for binding in _solve(tuple(rule.body), store, closure, {}):
        node = _value(rule.head.arg, binding)
        if isinstance(node, IRI):
            out.add(RdfTriple(node, TYPE, IRI(rule.head.cls)))
    return out


def apply_swrl(store: GraphStore, rules: Sequence[SwrlRule],
               closure: Optional[SubclassClosure] = None) -> set[RdfTriple]:
    """Naive forward chaining until no rule adds a triple."""
    closure = closure or subclass_closure(store.schema)
    inferred: set[RdfTriple] = set()
    changed = True
    while changed:
        changed = False
        for rule in rules:
            new = {t for t in rule_matches(rule, store, closure) if t not in store}
            if new:
                store.update(new)
                inferred |= new
                changed = True
    return inferred


def reason(store: GraphStore, rules: Sequence[SwrlRule] = (),
           axioms: Optional[Sequence[RestrictionAxiom]] = None) -> set[RdfTriple]:
    """Alternate restriction and rule application until neither adds anything."""
    closure = subclass_closure(store.schema)
    inferred: set[RdfTriple] = set()
    while True:
        new = apply_restrictions(store, axioms, closure) | apply_swrl(store, rules, closure)
        if not new:
            return inferred
        inferred |= new
