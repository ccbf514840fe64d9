"""Canonical N-Triples reading and writing.

The writer sorts lines lexically, so equal stores always produce identical
bytes. The reader accepts the writer's output plus comments, blank lines and
``\\uXXXX`` / ``\\UXXXXXXXX`` escapes.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable

from kgf.errors import KgfError
from kgf.graph.store import GraphStore
from kgf.graph.terms import IRI, Datatype, Literal, RdfTriple


class NTriplesError(KgfError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def serialize_ntriples(triples: GraphStore | Iterable[RdfTriple]) -> str:
    lines = sorted(t.n3() for t in triples)
    return "".join(line + "\n" for line in lines)


def write_ntriples(triples: GraphStore | Iterable[RdfTriple], path: str | Path) -> None:
    Path(path).write_bytes(serialize_ntriples(triples).encode("utf-8"))


_IRI_TOKEN = r"<([^<>\"\s]*)>"
_LITERAL = r'"((?:[^"\\]|\\.)*)"(?:\^\^<([^<>\s]*)>|@([A-Za-z]+(?:-[A-Za-z0-9]+)*))?'
_LINE = re.compile(rf"^\s*{_IRI_TOKEN}\s+{_IRI_TOKEN}\s+(?:{_IRI_TOKEN}|{_LITERAL})\s*\.\s*(?:#.*)?$")
_UNESCAPE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.DOTALL)
_SIMPLE = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def unescape_literal(text: str, line_no: int = 0) -> str:
    def repl(m: re.Match) -> str:
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        ch = m.group(3)
        if ch not in _SIMPLE:
            raise NTriplesError(line_no, f"bad escape \\{ch}")
        return _SIMPLE[ch]

    return _UNESCAPE.sub(repl, text)


def _iri(text: str, line_no: int) -> IRI:
    try:
        return IRI(unescape_literal(text, line_no))
    except ValueError as exc:
        raise NTriplesError(line_no, str(exc)) from None


def parse_ntriples_lines(text: str) -> list[RdfTriple]:
    out = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _LINE.match(line)
        if not m:
            raise NTriplesError(line_no, f"malformed triple: {stripped[:60]!r}")
        s, p, o_iri, lex, dt, lang = m.groups()
        if o_iri is not None:
            obj = _iri(o_iri, line_no)
        else:
            if lang:
                raise NTriplesError(line_no, "language-tagged literals are not supported")
            try:
                datatype = Datatype.from_iri(dt) if dt else Datatype.STRING
                obj = Literal(unescape_literal(lex, line_no), datatype)
            except ValueError as exc:
                raise NTriplesError(line_no, str(exc)) from None
        out.append(RdfTriple(_iri(s, line_no), _iri(p, line_no), obj))
    return out


def parse_ntriples(text: str, store: GraphStore | None = None) -> GraphStore:
    store = store if store is not None else GraphStore()
    store.update(parse_ntriples_lines(text))
    return store


def read_ntriples(path: str | Path) -> GraphStore:
    return parse_ntriples(Path(path).read_text(encoding="utf-8"))
