"""Encode EAV records, relations and schema declarations as RDF triples."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from kgf.errors import KgfError
from kgf.graph.store import TYPE
from kgf.graph.terms import IRI, Datatype, Literal, Node, RdfTriple
from kgf.iri import KG, OWL, RDF, RDFS, fhir_class, kg, slug
from kgf.ontology import ConceptMapping, DeclKind, SchemaDecl
from kgf.relations import canonical_predicate

HAS_ATTRIBUTE = IRI(KG + "hasAttribute")
INDICATES = IRI(KG + "indicates")
DESCRIBES = IRI(KG + "describes")
ORIGINAL_LEXICAL = IRI(KG + "originalLexical")
CLINICAL_CONCEPT = IRI(KG + "ClinicalConcept")
RDF_SUBJECT = IRI(RDF + "subject")
RDF_PREDICATE = IRI(RDF + "predicate")
RDF_OBJECT = IRI(RDF + "object")

_NUMBER = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d+)?|\.\d+))\s*([A-Za-z%µ/][\w%/^.\-]*)?\s*$")


class EncodingError(KgfError):
    pass


@dataclass(frozen=True)
class EncodePolicy:
    """``mode="edge"``: entity --attribute--> value.

    ``mode="node"``: patient --hasAttribute--> node, node a AttributeClass,
    node --indicates--> value, node --describes--> entity (when the entity is
    not the patient itself).
    """

    strict: bool = False
    mode: str = "edge"
    base: str = KG

    def __post_init__(self):
        if self.mode not in ("edge", "node"):
            raise ValueError(f"unknown encoding mode {self.mode!r}")


def term_key(text: str) -> str:
    return " ".join(text.replace("_", " ").casefold().split())


def _lookup(mappings: Optional[Mapping[str, Optional[ConceptMapping]]], text: str) -> Optional[ConceptMapping]:
    if not mappings:
        return None
    return mappings.get(term_key(text))


def sniff_literal(value: str) -> tuple[Literal, bool]:
    """Typed literal for ``value`` and whether its lexical form was normalized."""
    folded = value.strip().casefold()
    if folded in ("true", "false"):
        return Literal(folded, Datatype.BOOLEAN), folded != value
    m = _NUMBER.match(value)
    if m:
        return Literal(m.group(1), Datatype.DECIMAL), m.group(1) != value
    return Literal(value), False


def entity_iri(patient_id: str, entity: str, fhir_type: str, base: str = KG) -> IRI:
    if fhir_type == "Patient" and patient_id:
        return IRI(kg(patient_id, base))
    if patient_id:
        return IRI(base + slug(patient_id) + "_" + slug(entity))
    return IRI(kg(entity, base))


def _short_hash(*parts: str) -> str:
    return hashlib.sha1("\x1f".join(parts).encode("utf-8")).hexdigest()[:10]


def _provenance(triple: RdfTriple, original: str, base: str) -> list[RdfTriple]:
    stmt = IRI(base + "prov_" + _short_hash(triple.n3()))
    return [RdfTriple(stmt, RDF_SUBJECT, triple.subject),
            RdfTriple(stmt, RDF_PREDICATE, triple.predicate),
            RdfTriple(stmt, RDF_OBJECT, triple.object),
            RdfTriple(stmt, ORIGINAL_LEXICAL, Literal(original))]


def encode_eav(eav, mappings: Optional[Mapping[str, Optional[ConceptMapping]]] = None,
               policy: EncodePolicy = EncodePolicy()) -> list[RdfTriple]:
    """Type assertion for the entity plus the attribute edge (or attribute node)."""
    attr_map = _lookup(mappings, eav.attribute)
    if attr_map is None and policy.strict:
        raise EncodingError(f"attribute {eav.attribute!r} has no ontology mapping")
    subject = entity_iri(eav.patient_id, eav.entity, eav.fhir_type.value, policy.base)
    out = [RdfTriple(subject, TYPE, IRI(fhir_class(eav.fhir_type.value)))]

    value_map = _lookup(mappings, eav.value)
    normalized = False
    if value_map is not None:
        value: Node = IRI(value_map.term.uri)
    else:
        value, normalized = sniff_literal(eav.value)

    if policy.mode == "edge":
        predicate = IRI(attr_map.term.uri) if attr_map else IRI(kg(eav.attribute, policy.base))
        edge = RdfTriple(subject, predicate, value)
        out.append(edge)
    else:
        patient = IRI(kg(eav.patient_id or "patient", policy.base))
        node = IRI(policy.base + slug(eav.patient_id or "x") + "_" + slug(eav.attribute) + "_"
                   + _short_hash(eav.entity, eav.attribute, eav.value))
        if patient != subject:
            out.append(RdfTriple(patient, TYPE, IRI(fhir_class("Patient"))))
            out.append(RdfTriple(node, DESCRIBES, subject))
        out.append(RdfTriple(patient, HAS_ATTRIBUTE, node))
        out.append(RdfTriple(node, TYPE, IRI(kg(eav.attribute, policy.base))))
        if attr_map is not None:
            out.append(RdfTriple(node, TYPE, IRI(attr_map.term.uri)))
        edge = RdfTriple(node, INDICATES, value)
        out.append(edge)
    if normalized:
        out.extend(_provenance(edge, eav.value, policy.base))
    return out


def relation_predicate(predicate: str, base: str = KG) -> str:
    return kg(canonical_predicate(predicate), base)


def encode_relation(rel, patient_id: str, entity_types: Mapping[str, str],
                    predicate_iri: Callable[[str], str] = relation_predicate,
                    base: str = KG) -> list[RdfTriple]:
    """Relation edge between endpoint nodes; non-entity endpoints get a concept type."""
    out = []
    nodes = []
    for name in (rel.head, rel.tail):
        fhir_type = entity_types.get(term_key(name))
        if fhir_type is not None:
            nodes.append(entity_iri(patient_id, name, fhir_type, base))
        else:
            node = IRI(base + slug(patient_id or "x") + "_" + slug(name))
            out.append(RdfTriple(node, TYPE, IRI(kg(name, base))))
            out.append(RdfTriple(node, TYPE, CLINICAL_CONCEPT))
            nodes.append(node)
    out.append(RdfTriple(nodes[0], IRI(predicate_iri(rel.predicate)), nodes[1]))
    return out


def schema_triples(decls: Iterable[SchemaDecl]) -> list[RdfTriple]:
    out = []
    for d in decls:
        s = IRI(d.subject)
        if d.kind is DeclKind.CLASS:
            out.append(RdfTriple(s, TYPE, IRI(OWL + "Class")))
        elif d.kind is DeclKind.OBJECT_PROPERTY:
            out.append(RdfTriple(s, TYPE, IRI(OWL + "ObjectProperty")))
        elif d.kind is DeclKind.SUBCLASS_OF:
            out.append(RdfTriple(s, IRI(RDFS + "subClassOf"), IRI(d.object)))
        elif d.kind is DeclKind.EQUIVALENT_CLASS:
            out.append(RdfTriple(s, IRI(OWL + "equivalentClass"), IRI(d.object)))
        elif d.kind is DeclKind.DOMAIN_RANGE:
            if d.domain:
                out.append(RdfTriple(s, IRI(RDFS + "domain"), IRI(d.domain)))
            if d.range:
                out.append(RdfTriple(s, IRI(RDFS + "range"), IRI(d.range)))
    return out
