"""RDF store, serialization, query evaluation, reasoning and validation."""

from kgf.graph.encode import EncodePolicy, EncodingError, encode_eav, encode_relation, schema_triples
from kgf.graph.ntriples import NTriplesError, parse_ntriples, serialize_ntriples
from kgf.graph.reasoning import (
    SwrlRule,
    apply_restrictions,
    apply_swrl,
    parse_rules,
    reason,
    subclass_closure,
)
from kgf.graph.sparql import SparqlSyntaxError, UnsupportedFeature, eval_sparql, parse_sparql
from kgf.graph.store import GraphStore
from kgf.graph.terms import IRI, Datatype, Literal, RdfTriple
from kgf.graph.turtle import serialize_turtle
from kgf.graph.validate import Inconsistency, validate_domain_range

__all__ = [
    "Datatype", "EncodePolicy", "EncodingError", "GraphStore", "IRI", "Inconsistency", "Literal",
    "NTriplesError", "RdfTriple", "SparqlSyntaxError", "SwrlRule", "UnsupportedFeature",
    "apply_restrictions", "apply_swrl", "encode_eav", "encode_relation", "eval_sparql",
    "parse_ntriples", "parse_rules", "parse_sparql", "reason", "schema_triples",
    "serialize_ntriples", "serialize_turtle", "subclass_closure", "validate_domain_range",
]
