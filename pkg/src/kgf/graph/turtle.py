"""Readable Turtle output (prefixes, grouped subjects). Write-only."""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping, Optional

from kgf.graph.store import GraphStore
from kgf.graph.terms import IRI, Literal, Node, escape_literal
from kgf.iri import RDF_TYPE, compact


def _term(node: Node, prefixes: Mapping[str, str]) -> str:
    if isinstance(node, Literal):
        body = f'"{escape_literal(node.lexical)}"'
        if node.datatype.value.endswith("#string"):
            return body
        return f"{body}^^{compact(node.datatype.value, dict(prefixes))}"
    return compact(node.value, dict(prefixes))


def serialize_turtle(store: GraphStore, prefixes: Optional[Mapping[str, str]] = None) -> str:
    prefixes = dict(store.prefixes if prefixes is None else prefixes)
    lines = [f"@prefix {p}: <{base}> ." for p, base in sorted(prefixes.items())]
    grouped: dict[IRI, dict[IRI, list[Node]]] = defaultdict(lambda: defaultdict(list))
    for t in store:
        grouped[t.subject][t.predicate].append(t.object)
    for subject in sorted(grouped, key=lambda s: s.value):
        lines.append("")
        preds = grouped[subject]
        parts = []
        for pred in sorted(preds, key=lambda p: (p.value != RDF_TYPE, p.value)):
            verb = "a" if pred.value == RDF_TYPE else _term(pred, prefixes)
            objs = ", ".join(_term(o, prefixes) for o in preds[pred])
            parts.append(f"{verb} {objs}")
        lines.append(f"{_term(subject, prefixes)} " + " ;\n    ".join(parts) + " .")
    return "\n".join(lines) + "\n"
