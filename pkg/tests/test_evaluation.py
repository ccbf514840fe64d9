from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgf.evaluation import (
    CohortMetrics,
    CorrelationUndefined,
    ModelComparison,
    emit_report,
    pearson,
    summarize_eav,
    summarize_graph,
)
from kgf.extraction import EavTriple, FhirResourceType
from kgf.graph import IRI, GraphStore, RdfTriple
from kgf.graph.store import TYPE
from kgf.grounding.matching import GroundingReport
from kgf.ontology import ConceptMapper, OntologyTerm, Vocabulary
from kgf.relations import RelationKind, RelationTriple

import graph_cases as gcs

EX = gcs.EX


def _triangle() -> GraphStore:
    a, b, c, p = (IRI(EX + x) for x in "abcp")
    return GraphStore([RdfTriple(a, p, b), RdfTriple(b, p, c), RdfTriple(c, p, a), RdfTriple(a, p, a)])


def test_triangle_degree_two():
    m = summarize_graph(_triangle())
    assert (m.nodes, m.edges, m.avg_node_degree) == (3, 3, 2.0)
    assert m.rdf_triples == 4 and m.unique_predicates == 1


def test_type_edges_optional():
    store = _triangle()
    store.insert(RdfTriple(IRI(EX + "a"), TYPE, IRI(EX + "C")))
    assert summarize_graph(store).nodes == 4
    assert summarize_graph(store, include_types=False).nodes == 3
    assert summarize_graph(GraphStore()).avg_node_degree == 0.0


def test_seeded_inconsistencies_counted():
    assert summarize_graph(gcs.seeded_violation_store(2)).inconsistent_entities == 2


def _report(pid, g, r, h):
    n = g + r + h
    return GroundingReport(pid, n, g, r, h, g / n, g / n, h / n, r / (r + h) if r + h else 0.0, (g + r) / n)


def test_summarize_eav_sums_and_unweighted_means():
    reports = [_report("a", 6, 2, 2), _report("b", 1, 0, 1)]
    eavs = [EavTriple("Patient", FhirResourceType.PATIENT, "fever", "absent", "a"),
            EavTriple("patient", FhirResourceType.PATIENT, "Fever", "absent", "a"),
            EavTriple("Patient", FhirResourceType.PATIENT, "cough", "present", "b")]
    term = OntologyTerm(Vocabulary.SNOMED, "1", "Fever")
    mapping = ConceptMapper([term], 1.0).map("Fever")
    rels = [RelationTriple("A", "treats", "B", RelationKind.EE), RelationTriple("A", "Treats", "x", RelationKind.EA)]
    m = summarize_eav(reports, [mapping, None], rels, eavs, cohort="X", attempted_mappings=2)
    assert (m.eav.total_triples, m.eav.grounded, m.eav.hallucinated) == (12, 7, 3)
    assert m.eav.correctness_rate == pytest.approx((0.6 + 0.5) / 2)
    assert m.eav.rescue_rate == pytest.approx((0.5 + 0.0) / 2)
    assert m.eav.hallucinated_per_patient == 1.5
    assert (m.eav.entity_instances, m.eav.unique_attributes) == (2, 2)
    assert m.ontology.per_vocab_counts == {"SNOMED": 1} and m.ontology.unmapped_rate == 0.5
    assert (m.predicates.entity_predicates, m.predicates.attribute_predicates, m.predicates.total_instances) == (1, 1, 2)


def test_empty_cohort_zeros():
    m = summarize_eav([])
    assert m.patients == 0 and m.eav.correctness_rate == 0.0


series = st.lists(st.floats(0, 1), min_size=3, max_size=30)


@given(st.data())
def test_pearson_matches_numpy(data):
    x = data.draw(series)
    y = data.draw(st.lists(st.floats(0, 1), min_size=len(x), max_size=len(x)))
    if np.std(x) < 1e-6 or np.std(y) < 1e-6:
        return
    assert pearson(x, y) == pytest.approx(float(np.corrcoef(x, y)[0, 1]), abs=1e-9)


def test_pearson_known_values():
    x = [0.1, 0.4, 0.5, 0.9]
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == -1.0
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(CorrelationUndefined):
        pearson([0.5, 0.5], [0.1, 0.2])
    with pytest.raises(ValueError):
        pearson([1.0], [1.0])


def test_model_comparison_constant_series_gives_none():
    comp = ModelComparison.build(["p1", "p2", "p3"], {"A": [0.2, 0.5, 0.9], "B": [1.0, 1.0, 1.0],
                                                      "C": [0.1, 0.6, 0.8]})
    assert comp.correlations["A-B"] is None
    assert comp.correlations["A-C"] == pytest.approx(pearson([0.2, 0.5, 0.9], [0.1, 0.6, 0.8]))
    assert comp.differences["A-C"] == pytest.approx([0.1, -0.1, 0.1])
    with pytest.raises(ValueError):
        ModelComparison.build(["p1"], {"A": [1.2]})


def test_emit_report_deterministic(tmp_path):
    metrics = summarize_eav([_report("a", 6, 2, 2)], cohort="PDAC", structure=summarize_graph(_triangle()))
    comp = ModelComparison.build(["a", "b"], {"A": [0.5, 1.0], "B": [1.0, 0.25]},
                                 radar={"A": {"precision": 0.5}, "B": {"precision": 0.9}})
    first = emit_report([metrics], tmp_path / "one", comp, extra={"note": 1 / 3})
    second = emit_report([metrics], tmp_path / "two", comp, extra={"note": 1 / 3})
    assert [p.name for p in first] == ["metrics.json", "metrics.csv", "models.csv", "radar.csv"]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    doc = json.loads(first[0].read_text())
    assert doc["cohorts"]["PDAC"]["structure"]["avg_node_degree"] == 2.0
    assert "precision,A,0.500000" in first[3].read_text()
    assert isinstance(metrics, CohortMetrics)
