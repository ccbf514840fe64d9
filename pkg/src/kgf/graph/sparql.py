"""A small SPARQL subset: PREFIX, SELECT [DISTINCT], basic graph patterns, FILTER.

Grammar::

    query    := prefix* SELECT DISTINCT? (var+ | '*') WHERE? '{' body '}'
    prefix   := PREFIX name: <iri>
    body     := (triples | FILTER '(' expr ')' | '.')*
    triples  := term term term ((';' term term) | (',' term))*
    expr     := cmp ('&&' cmp)*
    cmp      := operand ('>' | '<' | '>=' | '<=' | '=' | '!=') operand

``a`` abbreviates ``rdf:type``. The rdf, rdfs, owl, xsd, kg and fhir prefixes
are predeclared. OPTIONAL, UNION, GRAPH, MINUS and property paths are
rejected with an explicit unsupported-feature error.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Iterator, Mapping, Optional, Union

from kgf.errors import KgfError
from kgf.graph.store import GraphStore
from kgf.graph.terms import IRI, Datatype, Literal, Node, RdfTriple, node_key
from kgf.graph.ntriples import unescape_literal
from kgf.iri import DEFAULT_PREFIXES, RDF_TYPE


class SparqlSyntaxError(KgfError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnsupportedFeature(SparqlSyntaxError):
    pass


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


PatternTerm = Union[Var, IRI, Literal]


@dataclass(frozen=True)
class TriplePattern:
    s: PatternTerm
    p: PatternTerm
    o: PatternTerm

    def variables(self) -> list[Var]:
        return [t for t in (self.s, self.p, self.o) if isinstance(t, Var)]


@dataclass(frozen=True)
class Comparison:
    left: PatternTerm
    op: str
    right: PatternTerm


@dataclass
class SparqlQuery:
    prefixes: dict[str, str]
    select: list[Var]
    patterns: list[TriplePattern]
    filters: list[Comparison] = field(default_factory=list)
    distinct: bool = False

    def variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for pat in self.patterns:
            for v in pat.variables():
                seen.setdefault(v)
        return list(seen)


Binding = dict[str, Node]

# -- tokenizer ----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+))
  | (?P<op>&&|\|\||>=|<=|!=|\^\^|[{}().;,*=<>!|/^])
  | (?P<pname>(?:[A-Za-z][\w\-]*)?:(?:[\w\-.]*[\w\-])?)
  | (?P<word>[A-Za-z][\w\-]*)
""", re.VERBOSE)

_UNSUPPORTED = {"OPTIONAL", "UNION", "GRAPH", "MINUS", "SERVICE", "BIND", "VALUES",
                "CONSTRUCT", "ASK", "DESCRIBE", "INSERT", "DELETE", "ORDER", "GROUP",
                "LIMIT", "OFFSET", "HAVING"}
_COMPARE = {">": operator.gt, "<": operator.lt, ">=": operator.ge, "<=": operator.le,
            "=": operator.eq, "!=": operator.ne}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SparqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    return out


# -- parser -------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.prefixes = dict(DEFAULT_PREFIXES)

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def pos(self) -> int:
        tok = self.peek()
        return tok.pos if tok else len(self.text)

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise SparqlSyntaxError("unexpected end of query", len(self.text))
        self.i += 1
        return tok

    def keyword(self, tok: Optional[_Tok], *words: str) -> bool:
        return tok is not None and tok.kind == "word" and tok.text.upper() in words

    def expect_op(self, op: str) -> _Tok:
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise SparqlSyntaxError(f"expected {op!r}, found {tok.text!r}", tok.pos)
        return tok

    def check_unsupported(self, tok: Optional[_Tok]) -> None:
        if tok is None:
            return
        if tok.kind == "word" and tok.text.upper() in _UNSUPPORTED:
            raise UnsupportedFeature(f"unsupported feature {tok.text.upper()}", tok.pos)
        if tok.kind == "op" and tok.text in ("|", "/", "^", "||", "!"):
            raise UnsupportedFeature(f"unsupported feature {tok.text!r} (property paths/disjunction)",
                                     tok.pos)

    def parse(self) -> SparqlQuery:
        while self.keyword(self.peek(), "PREFIX"):
            self.next()
            tok = self.next()
            if tok.kind != "pname" or not tok.text.endswith(":"):
                raise SparqlSyntaxError("expected prefix name", tok.pos)
            iri = self.next()
            if iri.kind != "iri":
                raise SparqlSyntaxError("expected <iri> after prefix", iri.pos)
            self.prefixes[tok.text[:-1]] = iri.text[1:-1]
        self.check_unsupported(self.peek())
        tok = self.next()
        if not self.keyword(tok, "SELECT"):
            raise SparqlSyntaxError("expected SELECT", tok.pos)
        distinct = False
        if self.keyword(self.peek(), "DISTINCT"):
            self.next()
            distinct = True
        select: list[Var] = []
        star = False
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "var":
                self.next()
                select.append(Var(tok.text[1:]))
            elif tok is not None and tok.kind == "op" and tok.text == "*" and not select and not star:
                self.next()
                star = True
            else:
                break
        if not select and not star:
            raise SparqlSyntaxError("expected variables or * after SELECT", self.pos())
        if self.keyword(self.peek(), "WHERE"):
            self.next()
        self.expect_op("{")
        patterns, filters = self.group()
        tok = self.peek()
        if tok is not None:
            self.check_unsupported(tok)
            raise SparqlSyntaxError(f"unexpected {tok.text!r} after query body", tok.pos)
        query = SparqlQuery(self.prefixes, select, patterns, filters, distinct)
        in_patterns = set(query.variables())
        if star:
            query.select = query.variables()
        for v in query.select:
            if v not in in_patterns:
                raise SparqlSyntaxError(f"selected variable {v} does not occur in any pattern", 0)
        for f in filters:
            for side in (f.left, f.right):
                if isinstance(side, Var) and side not in in_patterns:
                    raise SparqlSyntaxError(f"filter variable {side} does not occur in any pattern", 0)
        return query

    def group(self) -> tuple[list[TriplePattern], list[Comparison]]:
        patterns: list[TriplePattern] = []
        filters: list[Comparison] = []
        while True:
            tok = self.peek()
            self.check_unsupported(tok)
            if tok is None:
                raise SparqlSyntaxError("unterminated group, expected '}'", len(self.text))
            if tok.kind == "op" and tok.text == "}":
                self.next()
                return patterns, filters
            if tok.kind == "op" and tok.text == ".":
                self.next()
                continue
            if tok.kind == "op" and tok.text == "{":
                raise UnsupportedFeature("unsupported feature nested group", tok.pos)
            if self.keyword(tok, "FILTER"):
                self.next()
                self.expect_op("(")
                filters.extend(self.expr())
                self.expect_op(")")
                continue
            patterns.extend(self.triples())

    def triples(self) -> list[TriplePattern]:
        out = []
        s = self.term(subject=True)
        while True:
            p = self.term(verb=True)
            while True:
                o = self.term()
                out.append(TriplePattern(s, p, o))
                tok = self.peek()
                if tok is not None and tok.kind == "op" and tok.text == ",":
                    self.next()
                    continue
                break
            tok = self.peek()
            self.check_unsupported(tok)
            if tok is not None and tok.kind == "op" and tok.text == ";":
                self.next()
                nxt = self.peek()
                if nxt is not None and nxt.kind == "op" and nxt.text in (".", "}"):
                    return out
                continue
            return out

    def term(self, *, subject: bool = False, verb: bool = False) -> PatternTerm:
        tok = self.next()
        self.check_unsupported(tok)
        if tok.kind == "var":
            return Var(tok.text[1:])
        if tok.kind == "iri":
            return self.iri(tok.text[1:-1], tok.pos)
        if tok.kind == "pname":
            return self.iri(self.expand(tok), tok.pos)
        if tok.kind == "word" and tok.text == "a" and verb:
            return IRI(RDF_TYPE)
        if subject or verb:
            raise SparqlSyntaxError(f"expected a variable or IRI, found {tok.text!r}", tok.pos)
        return self.literal(tok)

    def iri(self, text: str, pos: int) -> IRI:
        try:
            return IRI(text)
        except ValueError:
            raise SparqlSyntaxError(f"malformed IRI <{text}>", pos) from None

    def expand(self, tok: _Tok) -> str:
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise SparqlSyntaxError(f"undeclared prefix {prefix!r}", tok.pos)
        return self.prefixes[prefix] + local

    def literal(self, tok: _Tok) -> Literal:
        if tok.kind == "number":
            dt = Datatype.DECIMAL if "." in tok.text else Datatype.INTEGER
            return Literal(tok.text, dt)
        if tok.kind == "word" and tok.text in ("true", "false"):
            return Literal(tok.text, Datatype.BOOLEAN)
        if tok.kind == "string":
            lexical = unescape_literal(tok.text[1:-1])
            nxt = self.peek()
            if nxt is not None and nxt.kind == "op" and nxt.text == "^^":
                self.next()
                dt_tok = self.next()
                dt_iri = dt_tok.text[1:-1] if dt_tok.kind == "iri" else self.expand(dt_tok)
                try:
                    return Literal(lexical, Datatype.from_iri(dt_iri))
                except ValueError as exc:
                    raise SparqlSyntaxError(str(exc), dt_tok.pos) from None
            return Literal(lexical)
        raise SparqlSyntaxError(f"unexpected {tok.text!r}", tok.pos)

    def operand(self) -> PatternTerm:
        tok = self.next()
        if tok.kind == "var":
            return Var(tok.text[1:])
        if tok.kind in ("iri", "pname"):
            return self.iri(tok.text[1:-1] if tok.kind == "iri" else self.expand(tok), tok.pos)
        return self.literal(tok)

    def expr(self) -> list[Comparison]:
        out = []
        while True:
            left = self.operand()
            tok = self.next()
            if tok.kind != "op" or tok.text not in _COMPARE:
                self.check_unsupported(tok)
                raise SparqlSyntaxError(f"expected comparison operator, found {tok.text!r}", tok.pos)
            right = self.operand()
            out.append(Comparison(left, tok.text, right))
            nxt = self.peek()
            if nxt is not None and nxt.kind == "op" and nxt.text == "&&":
                self.next()
                continue
            self.check_unsupported(nxt)
            return out


def parse_sparql(text: str) -> SparqlQuery:
    return _Parser(text).parse()


# -- evaluation -----------------------------------------------------------------

def numeric_value(node: Node) -> Optional[Decimal]:
    return node.numeric if isinstance(node, Literal) else None


def filter_passes(cmp: Comparison, binding: Mapping[str, Node]) -> bool:
    """Numeric comparison; anything non-numeric fails the filter."""
    def resolve(t):
        return binding.get(t.name) if isinstance(t, Var) else t

    left, right = resolve(cmp.left), resolve(cmp.right)
    if left is None or right is None:
        return False
    a, b = numeric_value(left), numeric_value(right)
    if a is None or b is None:
        return False
    return _COMPARE[cmp.op](a, b)


def _substitute(term: PatternTerm, binding: Mapping[str, Node]):
    if isinstance(term, Var):
        return binding.get(term.name)
    return term


def _extend(pattern: TriplePattern, triple: RdfTriple, binding: Binding) -> Optional[Binding]:
    out = dict(binding)
    for term, value in zip((pattern.s, pattern.p, pattern.o), triple):
        if isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                out[term.name] = value
            elif bound != value:
                return None
        elif term != value:
            return None
    return out


def _order(patterns: list[TriplePattern]) -> list[TriplePattern]:
    """Greedy join order: most constants first, then patterns sharing bound variables."""
    remaining = list(patterns)
    bound: set[Var] = set()
    ordered = []
    while remaining:
        def cost(p: TriplePattern):
            free = [v for v in p.variables() if v not in bound]
            return (len(free), remaining.index(p))
        best = min(remaining, key=cost)
        remaining.remove(best)
        ordered.append(best)
        bound.update(best.variables())
    return ordered


def solve_bgp(patterns: Iterable[TriplePattern], store: GraphStore) -> Iterator[Binding]:
    ordered = _order(list(patterns))

    def walk(i: int, binding: Binding) -> Iterator[Binding]:
        if i == len(ordered):
            yield binding
            return
        pat = ordered[i]
        s, p, o = (_substitute(t, binding) for t in (pat.s, pat.p, pat.o))
        if isinstance(s, Literal) or isinstance(p, Literal):
            return
        for triple in store.match(s, p, o):
            ext = _extend(pat, triple, binding)
            if ext is not None:
                yield from walk(i + 1, ext)

    yield from walk(0, {})


def eval_sparql(query: SparqlQuery | str, store: GraphStore) -> list[Binding]:
    """Solutions projected onto the selected variables, sorted by binding tuple."""
    if isinstance(query, str):
        query = parse_sparql(query)
    names = [v.name for v in query.select]
    rows = []
    for binding in solve_bgp(query.patterns, store):
        if all(filter_passes(f, binding) for f in query.filters):
            rows.append({n: binding[n] for n in names})
    if query.distinct:
        unique = {tuple(r[n] for n in names): r for r in rows}
        rows = list(unique.values())
    rows.sort(key=lambda r: tuple(node_key(r[n]) for n in names))
    return rows


def result_tuples(rows: list[Binding], names: Iterable[str]) -> list[tuple[str, ...]]:
    names = list(names)
    return [tuple(str(r[n]) for n in names) for r in rows]
