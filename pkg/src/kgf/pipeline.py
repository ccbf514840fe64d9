"""End-to-end orchestration: extract, ground, map, relate, encode, validate, report.

Per-document stage outputs are cached as ``<out>/<stage>/<patient_id>.json``
together with a fingerprint of their inputs and settings; a rerun with the
same fingerprint reuses the file instead of calling the agents again.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from kgf.agents.base import AgentError, AgentRole, BoundedProvider, CompletionProvider
from kgf.agents.embedding import HashingEmbedder
from kgf.agents.mock import ScriptedMockProvider
from kgf.agents.offline import HeuristicAgent
from kgf.config import Config
from kgf.corpus import ClinicalReport, Cohort, load_corpus
from kgf.errors import ConfigError, KgfError
from kgf.evaluation import CohortMetrics, ModelComparison, emit_report, summarize_eav, summarize_graph
from kgf.extraction import EavTriple, extract_eav, flag_uncertain
from kgf.graph.encode import CLINICAL_CONCEPT, EncodePolicy, encode_eav, encode_relation, relation_predicate, schema_triples, term_key
from kgf.graph.ntriples import serialize_ntriples
from kgf.graph.reasoning import load_rules, reason
from kgf.graph.store import GraphStore
from kgf.graph.turtle import serialize_turtle
from kgf.graph.validate import validate_domain_range
from kgf.grounding.matching import GroundingConfig, GroundingReport, MatchResult, Status, ground_triples, polarity
from kgf.iri import fhir_class
from kgf.ontology import (
    ConceptMapper,
    ConceptMapping,
    OntologyTerm,
    TBox,
    Vocabulary,
    build_schema,
    load_tbox,
    load_vocab_dir,
)
from kgf.relations import Reason, canonical_key, RelationConfig, RelationTriple, discover_relations

logger = logging.getLogger(__name__)

STAGES = ("extract", "ground", "map", "relate", "encode", "validate", "report")
CONCEPT_CLASS = CLINICAL_CONCEPT.value


@dataclass
class DocState:
    report: ClinicalReport
    eavs: list[EavTriple] = field(default_factory=list)
    uncertain: list[str] = field(default_factory=list)
    results: list[MatchResult] = field(default_factory=list)
    grounding: Optional[GroundingReport] = None
    mappings: dict[str, Optional[ConceptMapping]] = field(default_factory=dict)
    relations: dict = field(default_factory=dict)
    failed: bool = False
    fingerprint: str = ""

    @property
    def accepted(self) -> list[EavTriple]:
        keep = {r.triple_id for r in self.results if r.status is not Status.HALLUCINATED}
        return [t for t in self.eavs if t.triple_id in keep]


@dataclass
class PipelineResult:
    exit_code: int
    out_dir: Path
    failures: list[str] = field(default_factory=list)
    metrics: list[CohortMetrics] = field(default_factory=list)
    cached: dict[str, int] = field(default_factory=dict)


def _hash(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:16]


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def build_agents(cfg: Config, offline: bool) -> dict[AgentRole, CompletionProvider]:
    agents: dict[AgentRole, CompletionProvider] = {}
    for role in AgentRole:
        if offline:
            agent: CompletionProvider = HeuristicAgent(f"offline-{role.value.lower()}")
            if cfg.mock_fixtures is not None:
                agent = ScriptedMockProvider(cfg.mock_fixtures, provider_id=agent.provider_id, fallback=agent)
        else:
            from kgf.agents.http import HttpProvider

            model = cfg.models.get(role.value)
            if not cfg.endpoint or not model:
                raise ConfigError(f"online mode needs 'endpoint' and a model for role {role.value}")
            agent = HttpProvider(f"{role.value.lower()}:{model}", cfg.endpoint, model)
        agents[role] = BoundedProvider(agent, cfg.max_inflight)
    return agents


class Pipeline:
    def __init__(self, cfg: Config, *, offline: bool = True, cohort: Optional[str] = None,
                 out_dir: Optional[Path] = None,
                 agents: Optional[Mapping[AgentRole, CompletionProvider]] = None):
        self.cfg = cfg
        self.offline = offline
        self.cohort = Cohort.parse(cohort) if cohort else None
        self.out = Path(out_dir) if out_dir is not None else cfg.out
        self.agents = dict(agents) if agents is not None else build_agents(cfg, offline)
        self.embedder = HashingEmbedder()
        self.vocab = load_vocab_dir(cfg.vocab_dir)
        if not self.vocab:
            raise ConfigError(f"no vocabulary terms loaded from {cfg.vocab_dir}")
        self.terms = {(t.vocabulary, t.code): t for t in self.vocab}
        self.tbox = load_tbox(cfg.tbox) if cfg.tbox else TBox()
        self.rules = load_rules(cfg.rules, self.tbox.prefixes) if cfg.rules else []
        self.vocab_hash = _hash(*sorted(f"{t.vocabulary.value}|{t.code}|{t.label}|{'|'.join(t.synonyms)}"
                                        for t in self.vocab))
        self.failures: list[str] = []
        self.cached: dict[str, int] = {s: 0 for s in STAGES}

    # -- helpers ------------------------------------------------------------

    def _cache(self, stage: str, pid: str, fingerprint: str, compute: Callable[[], dict]) -> dict:
        path = self.out / stage / f"{pid}.json"
        if path.is_file():
            try:
                stored = json.loads(path.read_text(encoding="utf-8"))
                if stored.get("fingerprint") == fingerprint:
                    self.cached[stage] += 1
                    return stored["data"]
            except (json.JSONDecodeError, KeyError):
                logger.warning("ignoring unreadable cache file %s", path)
        data = compute()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_dump({"fingerprint": fingerprint, "data": data}), encoding="utf-8")
        return data

    def _parallel(self, fn: Callable[[DocState], None], docs: Sequence[DocState]) -> None:
        live = [d for d in docs if not d.failed]
        with ThreadPoolExecutor(max_workers=self.cfg.max_inflight) as pool:
            list(pool.map(fn, live))

    def _fail(self, stage: str, doc: DocState, exc: Exception) -> None:
        msg = f"{stage}:{doc.report.patient_id}: {exc}"
        logger.error(msg)
        self.failures.append(msg)
        doc.failed = True

    def _mapping_from_record(self, rec: Optional[dict]) -> Optional[ConceptMapping]:
        if rec is None:
            return None
        term = self.terms.get((Vocabulary(rec["vocab"]), rec["code"]))
        if term is None:
            term = OntologyTerm(Vocabulary(rec["vocab"]), rec["code"], rec["label"], uri=rec["uri"])
        return ConceptMapping(rec["raw"], term, rec["sim_lex"], rec["sim_sem"], rec["score"],
                              self.cfg.alpha_lex)

    # -- stages ---------------------------------------------------------------

    def stage_extract(self, doc: DocState) -> None:
        r = doc.report
        agent_id = getattr(self.agents[AgentRole.EXTRACTOR], "provider_id", "")
        fp = _hash("extract", r.narrative, agent_id, self.cfg.fingerprint("delta_h", "mean_entropy"))

        def compute() -> dict:
            res = extract_eav(r, self.agents[AgentRole.EXTRACTOR], mean_entropy=self.cfg.mean_entropy)
            part = flag_uncertain(res.triples, self.cfg.delta_h)
            return {"triples": [t.to_record() for t in res.triples], "skipped": res.skipped,
                    "uncertain": [t.triple_id for t in part.flagged]}

        try:
            data = self._cache("extract", r.patient_id, fp, compute)
        except (KgfError, AgentError) as exc:
            self._fail("extract", doc, exc)
            return
        doc.eavs = [EavTriple.from_record(rec) for rec in data["triples"]]
        doc.uncertain = list(data["uncertain"])
        doc.fingerprint = fp

    def stage_ground(self, doc: DocState) -> None:
        r = doc.report
        fp = _hash("ground", doc.fingerprint, self.cfg.fingerprint("tau_fuzzy", "gamma_ngram", "tau_typo"))
        gcfg = GroundingConfig(tau_fuzzy=self.cfg.tau_fuzzy, gamma_ngram=self.cfg.gamma_ngram,
                               tau_typo=self.cfg.tau_typo)

        def compute() -> dict:
            results, report = ground_triples(doc.eavs, r, gcfg)
            return {"results": [m.to_record() for m in results], "report": report.to_record()}

        data = self._cache("ground", r.patient_id, fp, compute)
        doc.results = [MatchResult.from_record(m) for m in data["results"]]
        doc.grounding = GroundingReport.from_record(data["report"])
        doc.fingerprint = fp

    def _map_keys(self, doc: DocState) -> list[str]:
        keys = set()
        for t in doc.accepted:
            keys.add(term_key(t.attribute))
            if polarity(t.value) is None and not any(ch.isdigit() for ch in t.value):
                keys.add(term_key(t.value))
        return sorted(k for k in keys if k)

    def stage_map(self, doc: DocState) -> None:
        r = doc.report
        fp = _hash("map", doc.fingerprint, self.vocab_hash, self.cfg.fingerprint("alpha_lex", "map_floor"))

        def compute() -> dict:
            mapper = ConceptMapper(self.vocab, self.cfg.alpha_lex, self.embedder, self.cfg.map_floor)
            out = {}
            for key in self._map_keys(doc):
                m = mapper.map(key)
                out[key] = m.to_record() if m else None
            return {"mappings": out}

        data = self._cache("map", r.patient_id, fp, compute)
        doc.mappings = {k: self._mapping_from_record(v) for k, v in data["mappings"].items()}
        doc.fingerprint = fp

    def _compliant(self, mapper: ConceptMapper) -> Callable[[RelationTriple], bool]:
        def check(t: RelationTriple) -> bool:
            return all((m := mapper.best(term_key(x))) is not None and m.score >= self.cfg.map_floor
                       for x in (t.head, t.tail))
        return check

    def stage_relate(self, doc: DocState) -> None:
        r = doc.report
        rcfg = RelationConfig(delta_j=self.cfg.delta_j, epsilon_xi=self.cfg.epsilon_xi,
                              lambdas=self.cfg.lambdas, delta_t=self.cfg.delta_t,
                              gamma_red=self.cfg.gamma_red, n_variants=self.cfg.n_variants,
                              n_perturbations=self.cfg.n_perturbations, tau_fuzzy=self.cfg.tau_fuzzy)
        ids = ",".join(getattr(a, "provider_id", "") for _, a in sorted(self.agents.items(), key=lambda kv: kv[0].value))
        fp = _hash("relate", doc.fingerprint, ids, self.cfg.fingerprint(
            "delta_j", "epsilon_xi", "lambda1", "lambda2", "lambda3", "delta_t", "gamma_red",
            "n_variants", "n_perturbations", "tau_fuzzy", "map_floor", "alpha_lex"))

        def compute() -> dict:
            mapper = ConceptMapper(self.vocab, self.cfg.alpha_lex, self.embedder, self.cfg.map_floor)
            outcome = discover_relations(r, doc.accepted, self.agents, rcfg, embedder=self.embedder,
                                         compliant=self._compliant(mapper))
            return {
                "per_model": {m: [t.to_record() for t in ts] for m, ts in sorted(outcome.per_model.items())},
                "scored": [t.to_record() for t in outcome.scored],
                "trusted": [t.to_record() for t in outcome.trusted],
                "quarantine": [dict(t.to_record(), reason=why.value) for t, why in outcome.quarantine],
                "gaps": [list(g) for g in outcome.gaps],
            }

        try:
            data = self._cache("relate", r.patient_id, fp, compute)
        except (KgfError, AgentError) as exc:
            self._fail("relate", doc, exc)
            return
        doc.relations = data
        qpath = self.out / "relate" / f"{r.patient_id}.quarantine.tsv"
        lines = ["reason\thead\tpredicate\ttail\tJ\txi\tT"]
        for q in data["quarantine"]:
            lines.append("\t".join(str(q.get(k) if q.get(k) is not None else "")
                                   for k in ("reason", "head", "predicate", "tail", "J", "xi", "T")))
        qpath.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def trusted_relations(self, doc: DocState) -> list[RelationTriple]:
        return [RelationTriple.from_record(t) for t in doc.relations.get("trusted", [])]

    # -- cohort-level stages ------------------------------------------------------

    def encode(self, docs: Sequence[DocState], *, write: bool = True) -> GraphStore:
        """Encode the documents, add the schema and run inference to a fixpoint."""
        policy = EncodePolicy(strict=self.cfg.strict_encoding, mode=self.cfg.encode_mode)
        store = GraphStore(prefixes=self.tbox.prefixes)
        all_mappings: list[ConceptMapping] = []
        all_eavs: list[EavTriple] = []
        all_relations: list[RelationTriple] = []
        endpoint_types: dict[str, str] = {}
        for doc in docs:
            if doc.failed:
                continue
            pid = doc.report.patient_id
            triples = []
            entity_types = {term_key(t.entity): t.fhir_type.value for t in doc.accepted}
            for eav in doc.accepted:
                triples.extend(encode_eav(eav, doc.mappings, policy))
            for rel in self.trusted_relations(doc):
                triples.extend(encode_relation(rel, pid, entity_types))
                for name in (rel.head, rel.tail):
                    fhir = entity_types.get(term_key(name))
                    endpoint_types.setdefault(name.casefold(), fhir_class(fhir) if fhir else CONCEPT_CLASS)
                all_relations.append(rel)
            if write:
                path = self.out / "encode" / f"{pid}.nt"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(serialize_ntriples(triples), encoding="utf-8")
            store.update(triples)
            all_mappings.extend(m for m in doc.mappings.values() if m is not None)
            all_eavs.extend(doc.accepted)
        decls = build_schema(all_mappings, all_eavs, all_relations, self.tbox,
                             endpoint_types=endpoint_types, predicate_iri=relation_predicate)
        store.schema = decls
        store.restrictions = list(self.tbox.restrictions)
        store.update(schema_triples(decls))
        inferred = reason(store, self.rules)
        logger.info("inference added %d triples", len(inferred))
        return store

    def run(self, until: str = "report") -> PipelineResult:
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        stop = STAGES.index(until)
        reports = load_corpus(self.cfg.corpus)
        if self.cohort is not None:
            reports = [r for r in reports if r.cohort is self.cohort]
        docs = [DocState(r) for r in reports]
        logger.info("loaded %d reports", len(docs))

        per_doc = [("extract", self.stage_extract), ("ground", self.stage_ground),
                   ("map", self.stage_map), ("relate", self.stage_relate)]
        for name, fn in per_doc:
            if STAGES.index(name) > stop:
                break
            self._parallel(fn, docs)

        metrics: list[CohortMetrics] = []
        if stop >= STAGES.index("encode"):
            store = self.encode(docs)
            graph_dir = self.out / "graph"
            graph_dir.mkdir(parents=True, exist_ok=True)
            (graph_dir / "cohort.nt").write_text(serialize_ntriples(store), encoding="utf-8")
            (graph_dir / "cohort.ttl").write_text(serialize_turtle(store), encoding="utf-8")
            if stop >= STAGES.index("validate"):
                issues = validate_domain_range(store, strict=self.cfg.strict_validation)
                vdir = self.out / "validate"
                vdir.mkdir(parents=True, exist_ok=True)
                (vdir / "cohort.json").write_text(_dump([i.to_record() for i in issues]), encoding="utf-8")
                if stop >= STAGES.index("report"):
                    metrics = self.report(docs, store, issues)

        return PipelineResult(1 if self.failures else 0, self.out, list(self.failures), metrics,
                              dict(self.cached))

    def report(self, docs: Sequence[DocState], store: GraphStore, issues) -> list[CohortMetrics]:
        live = [d for d in docs if not d.failed]
        metrics = []
        groups: dict[str, list[DocState]] = {}
        for d in live:
            groups.setdefault(d.report.cohort.value, []).append(d)
        for name, group in [("all", live)] + sorted(groups.items()):
            m = summarize_eav(
                [d.grounding for d in group],
                [m for d in group for m in d.mappings.values()],
                [t for d in group for t in self.trusted_relations(d)],
                [t for d in group for t in d.eavs],
                cohort=name,
                attempted_mappings=sum(len(d.mappings) for d in group),
                structure=self._structure(group, store, issues, name == "all"),
            )
            metrics.append(m)
        comparison = self.compare_models(live)
        extra = {
            "uncertain_triples": sum(len(d.uncertain) for d in live),
            "quarantine_reasons": dict(sorted(_count_reasons(live).items())),
            "semantic_gaps": sorted({" | ".join(g) for d in live for g in d.relations.get("gaps", [])}),
            "failures": list(self.failures),
        }
        emit_report(metrics, self.out / "report", comparison, extra=extra)
        return metrics

    def _structure(self, group: Sequence[DocState], store: GraphStore, issues, whole: bool):
        if whole:
            return summarize_graph(store, inconsistencies=issues)
        sub = self.encode(group, write=False)
        return summarize_graph(sub, inconsistencies=validate_domain_range(
            sub, strict=self.cfg.strict_validation))

    def compare_models(self, docs: Sequence[DocState]) -> Optional[ModelComparison]:
        if not docs:
            return None
        models = sorted({m for d in docs for m in d.relations.get("per_model", {})})
        if not models:
            return None
        correctness = {m: [] for m in models}
        recall = {m: [] for m in models}
        for d in docs:
            trusted = {canonical_key(t) for t in self.trusted_relations(d)}
            for m in models:
                proposed = {canonical_key(RelationTriple.from_record(t))
                            for t in d.relations.get("per_model", {}).get(m, [])}
                hit = len(proposed & trusted)
                correctness[m].append(hit / len(proposed) if proposed else 0.0)
                recall[m].append(hit / len(trusted) if trusted else 0.0)
        radar = {m: {"precision": sum(correctness[m]) / len(docs),
                     "recall": sum(recall[m]) / len(docs)} for m in models}
        return ModelComparison.build([d.report.patient_id for d in docs], correctness, radar)


def _count_reasons(docs: Sequence[DocState]) -> dict[str, int]:
    out: dict[str, int] = {r.value: 0 for r in Reason}
    for d in docs:
        for q in d.relations.get("quarantine", []):
            out[q["reason"]] += 1
    return out


def run_pipeline(cfg: Config, *, offline: bool = True, cohort: Optional[str] = None,
                 out_dir: Optional[Path] = None, until: str = "report") -> PipelineResult:
    return Pipeline(cfg, offline=offline, cohort=cohort, out_dir=out_dir).run(until)
