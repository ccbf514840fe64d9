"""RDF terms: IRIs, typed literals and triples."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Optional, Union

from kgf.iri import XSD, is_iri


class Datatype(str, enum.Enum):
    STRING = XSD + "string"
    DECIMAL = XSD + "decimal"
    INTEGER = XSD + "integer"
    BOOLEAN = XSD + "boolean"

    @classmethod
    def from_iri(cls, iri: str) -> "Datatype":
        for dt in cls:
            if dt.value == iri:
                return dt
        raise ValueError(f"unsupported datatype <{iri}>")


_DECIMAL = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)$")
_INTEGER = re.compile(r"^[+-]?\d+$")
_BOOLEAN = frozenset({"true", "false", "1", "0"})


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def __post_init__(self):
        if not is_iri(self.value):
            raise ValueError(f"malformed IRI {self.value!r}")

    def n3(self) -> str:
        return f"<{self.value}>"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: Datatype = Datatype.STRING

    def __post_init__(self):
        if self.datatype is Datatype.DECIMAL and not _DECIMAL.match(self.lexical):
            raise ValueError(f"{self.lexical!r} is not a decimal")
        if self.datatype is Datatype.INTEGER and not _INTEGER.match(self.lexical):
            raise ValueError(f"{self.lexical!r} is not an integer")
        if self.datatype is Datatype.BOOLEAN and self.lexical not in _BOOLEAN:
            raise ValueError(f"{self.lexical!r} is not a boolean")

    @property
    def numeric(self) -> Optional[Decimal]:
        """Numeric value for decimal/integer literals, else None."""
        if self.datatype in (Datatype.DECIMAL, Datatype.INTEGER):
            try:
                return Decimal(self.lexical)
            except InvalidOperation:  # pragma: no cover - guarded by __post_init__
                return None
        return None

    def n3(self) -> str:
        body = f'"{escape_literal(self.lexical)}"'
        if self.datatype is Datatype.STRING:
            return body
        return f"{body}^^<{self.datatype.value}>"

    def __str__(self) -> str:
        return self.lexical


Node = Union[IRI, Literal]


@dataclass(frozen=True)
class RdfTriple:
    subject: IRI
    predicate: IRI
    object: Node

    def __post_init__(self):
        if not isinstance(self.subject, IRI):
            raise TypeError("subject must be an IRI")
        if not isinstance(self.predicate, IRI):
            raise TypeError("predicate must be an IRI")
        if not isinstance(self.object, (IRI, Literal)):
            raise TypeError("object must be an IRI or Literal")

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))


def node_key(node: Node) -> str:
    """Total order over nodes, consistent with the N-Triples text."""
    return node.n3()


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def escape_literal(text: str) -> str:
    out = []
    for ch in text:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) in (0x7F, 0x85, 0x2028, 0x2029):
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def numeric_literal(value) -> Literal:
    """Decimal literal for an int/float/Decimal/str number."""
    text = format(Decimal(str(value)), "f")
    return Literal(text, Datatype.DECIMAL)


def boolean_literal(value: bool) -> Literal:
    return Literal("true" if value else "false", Datatype.BOOLEAN)
