"""Namespaces and IRI minting helpers."""

from __future__ import annotations

import re
from urllib.parse import quote

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
KG = "http://example.org/kg#"
FHIR = "http://hl7.org/fhir/"

RDF_TYPE = RDF + "type"

DEFAULT_PREFIXES = {
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "kg": KG,
    "fhir": FHIR,
}

_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:[^\s<>\"{}|\\^`]+$")


def is_iri(text: str) -> bool:
    return bool(_IRI.match(text))


def slug(text: str) -> str:
    """Identifier-safe local name: runs of non-alphanumerics become ``_``."""
    s = re.sub(r"[^0-9A-Za-z]+", "_", text.strip()).strip("_")
    if not s:
        s = "x"
    if s[0].isdigit():
        s = "_" + s
    return s


def kg(local: str, base: str = KG) -> str:
    return base + slug(local)


def fhir_class(type_name: str) -> str:
    return FHIR + type_name


def encode_local(code: str) -> str:
    """Percent-encode a code so distinct codes always give distinct IRIs."""
    return quote(code, safe="")


def expand(name: str, prefixes: dict[str, str]) -> str:
    """Expand ``<iri>`` or ``prefix:local`` to a full IRI."""
    name = name.strip()
    if name.startswith("<") and name.endswith(">"):
        return name[1:-1]
    prefix, sep, local = name.partition(":")
    if sep and prefix in prefixes:
        return prefixes[prefix] + local
    if sep and is_iri(name):
        return name
    raise ValueError(f"cannot expand {name!r}: unknown prefix")


def compact(iri: str, prefixes: dict[str, str]) -> str:
    best = None
    for prefix, base in prefixes.items():
        if iri.startswith(base) and re.fullmatch(r"[A-Za-z0-9_\-]*", iri[len(base):]):
            if best is None or len(base) > len(prefixes[best]):
                best = prefix
    if best is None:
        return f"<{iri}>"
    return f"{best}:{iri[len(prefixes[best]):]}"
