"""Cohort and model metrics, plus deterministic JSON/CSV report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from kgf.errors import KgfError
from kgf.graph.store import TYPE, GraphStore
from kgf.graph.validate import Inconsistency, inconsistent_entities, validate_domain_range
from kgf.relations import RelationKind

logger = logging.getLogger(__name__)


class CorrelationUndefined(KgfError, ValueError):
    pass


@dataclass
class EavMetrics:
    total_triples: int = 0
    entity_instances: int = 0
    unique_attributes: int = 0
    grounded: int = 0
    rescued: int = 0
    hallucinated: int = 0
    coverage: float = 0.0
    correctness_rate: float = 0.0
    supported_rate: float = 0.0
    hallucination_rate: float = 0.0
    rescue_rate: float = 0.0
    hallucinated_per_patient: float = 0.0


@dataclass
class OntologyMetrics:
    mapped_attributes: int = 0
    per_vocab_counts: dict[str, int] = field(default_factory=dict)
    unmapped_rate: float = 0.0


@dataclass
class PredicateMetrics:
    entity_predicates: int = 0
    attribute_predicates: int = 0
    total_instances: int = 0


@dataclass
class StructureMetrics:
    rdf_triples: int = 0
    unique_predicates: int = 0
    nodes: int = 0
    edges: int = 0
    avg_node_degree: float = 0.0
    inconsistent_entities: int = 0


@dataclass
class CohortMetrics:
    cohort: str = ""
    patients: int = 0
    eav: EavMetrics = field(default_factory=EavMetrics)
    ontology: OntologyMetrics = field(default_factory=OntologyMetrics)
    predicates: PredicateMetrics = field(default_factory=PredicateMetrics)
    structure: StructureMetrics = field(default_factory=StructureMetrics)

    def to_record(self) -> dict:
        return _rounded(asdict(self))


def _rounded(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


# -- graph structure ------------------------------------------------------------

def summarize_graph(store: GraphStore, *, include_types: bool = True,
                    inconsistencies: Optional[Sequence[Inconsistency]] = None) -> StructureMetrics:
    """Triple/predicate counts and 2E/V over the undirected simple graph."""
    edges: set[frozenset] = set()
    nodes: set = set()
    for t in store.triples():
        if not include_types and t.predicate == TYPE:
            continue
        nodes.add(t.subject)
        nodes.add(t.object)
        if t.subject != t.object:
            edges.add(frozenset((t.subject, t.object)))
    if inconsistencies is None:
        inconsistencies = validate_domain_range(store) if store.schema else []
    degree = 2 * len(edges) / len(nodes) if nodes else 0.0
    return StructureMetrics(
        rdf_triples=len(store),
        unique_predicates=len(store.predicates()),
        nodes=len(nodes),
        edges=len(edges),
        avg_node_degree=degree,
        inconsistent_entities=inconsistent_entities(inconsistencies),
    )


# -- EAV and ontology aggregates --------------------------------------------------

def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def summarize_eav(reports: Sequence, mappings: Iterable = (), relations: Iterable = (),
                  eavs: Iterable = (), *, cohort: str = "", attempted_mappings: Optional[int] = None,
                  structure: Optional[StructureMetrics] = None) -> CohortMetrics:
    """Totals are sums over patients; rates are unweighted means over patients."""
    reports = list(reports)
    metrics = CohortMetrics(cohort=cohort, patients=len(reports))
    if not reports:
        logger.warning("summarize_eav: empty cohort, reporting zeros")
    e = metrics.eav
    e.total_triples = sum(r.triples for r in reports)
    e.grounded = sum(r.grounded for r in reports)
    e.rescued = sum(r.rescued for r in reports)
    e.hallucinated = sum(r.hallucinated for r in reports)
    e.coverage = _mean([r.coverage for r in reports])
    e.correctness_rate = _mean([r.correctness_rate for r in reports])
    e.supported_rate = _mean([r.supported_rate for r in reports])
    e.hallucination_rate = _mean([r.hallucination_rate for r in reports])
    e.rescue_rate = _mean([r.rescue_rate for r in reports])
    e.hallucinated_per_patient = e.hallucinated / len(reports) if reports else 0.0

    eavs = list(eavs)
    e.entity_instances = len({(t.patient_id, t.entity.casefold()) for t in eavs})
    e.unique_attributes = len({t.attribute.casefold() for t in eavs})

    mapped = [m for m in mappings if m is not None]
    o = metrics.ontology
    o.mapped_attributes = len(mapped)
    o.per_vocab_counts = dict(sorted(Counter(m.term.vocabulary.value for m in mapped).items()))
    attempted = attempted_mappings if attempted_mappings is not None else len(mapped)
    o.unmapped_rate = (attempted - len(mapped)) / attempted if attempted else 0.0

    relations = list(relations)
    p = metrics.predicates
    p.entity_predicates = len({r.predicate.casefold() for r in relations if r.kind is RelationKind.EE})
    p.attribute_predicates = len({r.predicate.casefold() for r in relations if r.kind is not RelationKind.EE})
    p.total_instances = len(relations)

    if structure is not None:
        metrics.structure = structure
    return metrics


# -- correlation ------------------------------------------------------------------

def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("series must have equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    mx, my = _mean(x), _mean(y)
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise CorrelationUndefined("correlation is undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class ModelComparison:
    patients: list[str]
    correctness: dict[str, list[float]]
    differences: dict[str, list[float]] = field(default_factory=dict)
    correlations: dict[str, Optional[float]] = field(default_factory=dict)
    radar: dict[str, dict[str, float]] = field(default_factory=dict)

    @classmethod
    def build(cls, patients: Sequence[str], correctness: Mapping[str, Sequence[float]],
              radar: Optional[Mapping[str, Mapping[str, float]]] = None) -> "ModelComparison":
        for model, series in correctness.items():
            if len(series) != len(patients):
                raise ValueError(f"series for {model} has {len(series)} values for {len(patients)} patients")
            if any(not 0.0 <= v <= 1.0 for v in series):
                raise ValueError(f"correctness of {model} outside [0, 1]")
        comp = cls(list(patients), {m: list(v) for m, v in sorted(correctness.items())},
                   radar={m: dict(sorted(v.items())) for m, v in sorted((radar or {}).items())})
        for a, b in combinations(sorted(correctness), 2):
            key = f"{a}-{b}"
            xa, xb = correctness[a], correctness[b]
            comp.differences[key] = [u - v for u, v in zip(xa, xb)]
            try:
                comp.correlations[key] = pearson(xa, xb)
            except (CorrelationUndefined, ValueError):
                comp.correlations[key] = None
        return comp

    def radar_rows(self) -> list[tuple[str, str, float]]:
        return sorted((axis, model, value) for model, axes in self.radar.items()
                      for axis, value in axes.items())

    def to_record(self) -> dict:
        return _rounded({"patients": self.patients, "correctness": self.correctness,
                         "differences": self.differences, "correlations": self.correlations,
                         "radar": self.radar})


# -- report files ---------------------------------------------------------------

def _flatten(prefix: str, obj, out: list[tuple[str, str, object]]):
    if isinstance(obj, dict):
        for k in obj:
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], out)
    else:
        section, _, name = prefix.partition(".")
        out.append((section, name or section, obj))


def _csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def emit_report(metrics: Sequence[CohortMetrics] | CohortMetrics, out_dir: str | Path,
                comparison: Optional[ModelComparison] = None, *,
                extra: Optional[Mapping[str, object]] = None) -> list[Path]:
    """Write metrics.json, metrics.csv and (with a comparison) models.csv / radar.csv."""
    if isinstance(metrics, CohortMetrics):
        metrics = [metrics]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    doc: dict = {"cohorts": {m.cohort or "all": m.to_record() for m in metrics}}
    if comparison is not None:
        doc["models"] = comparison.to_record()
    if extra:
        doc["extra"] = _rounded(dict(extra))
    path = out / "metrics.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    rows = []
    for m in metrics:
        flat: list[tuple[str, str, object]] = []
        _flatten("", {k: v for k, v in m.to_record().items() if k not in ("cohort",)}, flat)
        rows.extend((m.cohort or "all", s, n, v) for s, n, v in flat)
    path = out / "metrics.csv"
    path.write_text(_csv(rows, ("cohort", "section", "metric", "value")), encoding="utf-8")
    written.append(path)

    if comparison is not None:
        model_rows = []
        for i, pid in enumerate(comparison.patients):
            for model, series in comparison.correctness.items():
                model_rows.append((pid, model, series[i]))
        path = out / "models.csv"
        path.write_text(_csv(model_rows, ("patient_id", "model", "correctness")), encoding="utf-8")
        written.append(path)
        path = out / "radar.csv"
        path.write_text(_csv(comparison.radar_rows(), ("axis", "model", "value")), encoding="utf-8")
        written.append(path)
    return written
