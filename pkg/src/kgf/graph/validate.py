"""Domain and range checks against the store schema."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from kgf.graph.reasoning import SubclassClosure, subclass_closure
from kgf.graph.store import GraphStore
from kgf.graph.terms import IRI, Literal, Node, RdfTriple
from kgf.iri import XSD
from kgf.ontology import DeclKind

UNTYPED = "untyped"


@dataclass(frozen=True, order=True)
class Inconsistency:
    triple: RdfTriple
    side: str  # "domain" or "range"
    expected: str
    found: tuple[str, ...]

    @property
    def node(self) -> Node:
        return self.triple.subject if self.side == "domain" else self.triple.object

    def to_record(self) -> dict:
        return {"triple": self.triple.n3(), "side": self.side, "expected": self.expected,
                "found": list(self.found)}


def _check(store: GraphStore, node: Node, expected: str, closure: SubclassClosure,
           strict: bool) -> Optional[tuple[str, ...]]:
    """None when ``node`` conforms, else the types that were found."""
    if isinstance(node, Literal):
        if expected.startswith(XSD):
            return None if node.datatype.value == expected else (node.datatype.value,)
        return (node.datatype.value,)
    if expected.startswith(XSD):
        return (UNTYPED,) if not store.types_of(node) else tuple(sorted(store.types_of(node)))
    types = store.types_of(node)
    if not types:
        return (UNTYPED,) if strict else None
    if any(closure.is_subclass(t, expected) for t in types):
        return None
    return tuple(sorted(types))


def validate_domain_range(store: GraphStore, *, strict: bool = True,
                          closure: Optional[SubclassClosure] = None) -> list[Inconsistency]:
    """One report per offending (triple, side); untyped nodes count only when ``strict``."""
    closure = closure or subclass_closure(store.schema)
    out: list[Inconsistency] = []
    for decl in store.schema:
        if decl.kind is not DeclKind.DOMAIN_RANGE:
            continue
        for triple in store.match(p=IRI(decl.subject)):
            if decl.domain:
                found = _check(store, triple.subject, decl.domain, closure, strict)
                if found is not None:
                    out.append(Inconsistency(triple, "domain", decl.domain, found))
            if decl.range:
                found = _check(store, triple.object, decl.range, closure, strict)
                if found is not None:
                    out.append(Inconsistency(triple, "range", decl.range, found))
    return sorted(set(out), key=lambda i: (i.triple.n3(), i.side))


def inconsistent_entities(reports: Iterable[Inconsistency]) -> int:
    return len({r.node for r in reports})
