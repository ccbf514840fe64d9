"""Indexed in-memory triple store."""

from __future__ import annotations

import threading
from collections import defaultdict
from typing import Iterable, Iterator, Mapping, Optional

from kgf.graph.terms import IRI, Node, RdfTriple
from kgf.iri import DEFAULT_PREFIXES, RDF_TYPE
from kgf.ontology import RestrictionAxiom, SchemaDecl

TYPE = IRI(RDF_TYPE)


class GraphStore:
    """Set of triples with subject, predicate and object indices.

    Writes take a lock; readers see a consistent snapshot per call.
    """

    def __init__(self, triples: Iterable[RdfTriple] = (), *,
                 schema: Iterable[SchemaDecl] = (),
                 restrictions: Iterable[RestrictionAxiom] = (),
                 prefixes: Optional[Mapping[str, str]] = None):
        self._triples: set[RdfTriple] = set()
        self._spo: dict[IRI, dict[IRI, set[Node]]] = defaultdict(lambda: defaultdict(set))
        self._pos: dict[IRI, dict[Node, set[IRI]]] = defaultdict(lambda: defaultdict(set))
        self._osp: dict[Node, dict[IRI, set[IRI]]] = defaultdict(lambda: defaultdict(set))
        self._lock = threading.Lock()
        self.schema: list[SchemaDecl] = list(schema)
        self.restrictions: list[RestrictionAxiom] = list(restrictions)
        self.prefixes: dict[str, str] = dict(DEFAULT_PREFIXES if prefixes is None else prefixes)
        for t in triples:
            self.insert(t)

    # -- writes -------------------------------------------------------------

    def insert(self, triple: RdfTriple) -> bool:
        """Add ``triple``; returns True when it was not already present."""
        with self._lock:
            if triple in self._triples:
                return False
            self._triples.add(triple)
            s, p, o = triple.subject, triple.predicate, triple.object
            self._spo[s][p].add(o)
            self._pos[p][o].add(s)
            self._osp[o][s].add(p)
            return True

    def update(self, triples: Iterable[RdfTriple]) -> int:
        return sum(1 for t in triples if self.insert(t))

    add = insert

    def bind(self, prefix: str, base: str) -> None:
        if prefix in self.prefixes and self.prefixes[prefix] != base:
            raise ValueError(f"prefix {prefix!r} already bound to {self.prefixes[prefix]}")
        self.prefixes[prefix] = base

    # -- reads --------------------------------------------------------------

    def contains(self, triple: RdfTriple) -> bool:
        return triple in self._triples

    __contains__ = contains

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[RdfTriple]:
        return iter(sorted(self._triples, key=RdfTriple.n3))

    def triples(self) -> frozenset[RdfTriple]:
        return frozenset(self._triples)

    def match(self, s: Optional[IRI] = None, p: Optional[IRI] = None,
              o: Optional[Node] = None) -> list[RdfTriple]:
        """All triples agreeing with the given positions (None is a wildcard)."""
        if s is not None:
            if s not in self._spo:
                return []
            by_p = self._spo[s]
            preds = [p] if p is not None else list(by_p)
            out = []
            for pp in preds:
                objs = by_p.get(pp, ())
                if o is not None:
                    if o in objs:
                        out.append(RdfTriple(s, pp, o))
                else:
                    out.extend(RdfTriple(s, pp, oo) for oo in list(objs))
            return out
        if p is not None:
            if p not in self._pos:
                return []
            by_o = self._pos[p]
            objs = [o] if o is not None else list(by_o)
            return [RdfTriple(ss, p, oo) for oo in objs for ss in list(by_o.get(oo, ()))]
        if o is not None:
            if o not in self._osp:
                return []
            return [RdfTriple(ss, pp, o) for ss, ps in list(self._osp[o].items()) for pp in list(ps)]
        return list(self._triples)

    def objects(self, s: IRI, p: IRI) -> set[Node]:
        return set(self._spo.get(s, {}).get(p, ()))

    def subjects(self, p: IRI, o: Node) -> set[IRI]:
        return set(self._pos.get(p, {}).get(o, ()))

    def types_of(self, node: Node) -> set[str]:
        if not isinstance(node, IRI):
            return set()
        return {t.value for t in self.objects(node, TYPE) if isinstance(t, IRI)}

    def nodes(self) -> set[Node]:
        out: set[Node] = set()
        for t in self._triples:
            out.add(t.subject)
            out.add(t.object)
        return out

    def predicates(self) -> set[IRI]:
        return {p for p, by_o in self._pos.items() if by_o}

    def copy(self) -> "GraphStore":
        return GraphStore(self._triples, schema=self.schema, restrictions=self.restrictions,
                          prefixes=self.prefixes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphStore):
            return NotImplemented
        return self._triples == other._triples

    def __repr__(self) -> str:
        return f"GraphStore({len(self)} triples)"
