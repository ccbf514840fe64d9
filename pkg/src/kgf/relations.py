"""Stages 3 and 5: relation discovery, multi-agent scoring and trust filtering."""

from __future__ import annotations

import enum
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

from kgf.agents.base import (
    VARIANT_TEMPERATURE,
    AgentRequest,
    AgentRole,
    CompletionProvider,
    complete,
)
from kgf.agents.embedding import EmbeddingProvider, HashingEmbedder, cosine
from kgf.agents.prompts import VARIANT_INSTRUCTIONS, render_prompt
from kgf.corpus import ClinicalReport
from kgf.errors import KgfError
from kgf.grounding.fuzzy import fuzzy_ratio

logger = logging.getLogger(__name__)

DEFAULT_DELTA_J = 0.7
DEFAULT_EPSILON = 0.2
DEFAULT_LAMBDAS = (0.4, 0.3, 0.3)
DEFAULT_DELTA_T = 0.65
DEFAULT_GAMMA_RED = 0.85
DEFAULT_VARIANTS = 5
DEFAULT_PERTURBATIONS = 5

# Predicates treated as the same relation (maps to the canonical form).
PREDICATE_SYNONYMS = {
    "verifies": "confirms",
    "verified": "confirms",
    "confirmed": "confirms",
    "establishes": "confirms",
    "suggests": "indicates",
    "suggested": "indicates",
    "indicated": "indicates",
    "shows": "visualizes",
    "visualized": "visualizes",
    "revealed_by": "visualizes",
    "showed": "visualizes",
    "demonstrates": "visualizes",
    "demonstrated": "visualizes",
    "reveals": "visualizes",
    "revealed": "visualizes",
    "started": "initiated",
    "starts": "initiated",
    "initiates": "initiated",
    "determined": "determines",
    "treated": "treats",
    "treated_with": "treats",
}

STOPWORDS = frozenset("""
a an the of and or to in on at for with by from is are was were be been being it its
this that these those as has have had not no but if then than so such per into over
under via also which who whom whose there their his her he she they them we our
""".split())


class RelationKind(str, enum.Enum):
    EE = "EE"
    EA = "EA"
    AA = "AA"


class Verdict(str, enum.Enum):
    CONSISTENT = "Consistent"
    CONTRADICTORY = "Contradictory"
    UNCLEAR = "Unclear"

    @classmethod
    def parse(cls, text: str) -> "Verdict":
        key = text.strip().strip(".").upper()
        if key == "CONSISTENT":
            return cls.CONSISTENT
        if key == "CONTRADICTORY":
            return cls.CONTRADICTORY
        return cls.UNCLEAR


class Reason(str, enum.Enum):
    LOW_J = "LOW_J"
    HIGH_XI = "HIGH_XI"
    SINGLE_MODEL = "SINGLE_MODEL"
    REDUNDANT = "REDUNDANT"
    LOW_T = "LOW_T"
    UNSCORED = "UNSCORED"
    CONFLICT = "CONFLICT"


class RelationError(KgfError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class JudgmentError(RelationError):
    pass


_SCORE_FIELDS = ("J", "xi", "C", "R", "T")


@dataclass(frozen=True)
class RelationTriple:
    head: str
    predicate: str
    tail: str
    kind: RelationKind = RelationKind.EA
    source: str = ""
    generator_id: str = ""
    anchored: bool = True
    J: Optional[float] = None
    xi: Optional[float] = None
    C: Optional[float] = None
    R: Optional[float] = None
    T: Optional[float] = None

    def __post_init__(self):
        if not self.predicate.strip():
            raise ValueError("predicate must be non-empty")
        if not self.head.strip() or not self.tail.strip():
            raise ValueError("head and tail must be non-empty")
        if _norm_term(self.head) == _norm_term(self.tail):
            raise ValueError(f"head equals tail: {self.head!r}")
        for name in _SCORE_FIELDS:
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"score {name}={v} outside [0, 1]")

    @property
    def key(self) -> tuple[str, str, str]:
        return canonical_key(self)

    def verbalize(self) -> str:
        return f"{self.head} {self.predicate.replace('_', ' ')} {self.tail}"

    def with_scores(self, **scores) -> "RelationTriple":
        return replace(self, **scores)

    def to_record(self) -> dict:
        rec = {
            "head": self.head, "predicate": self.predicate, "tail": self.tail,
            "kind": self.kind.value, "source": self.source,
            "generator_id": self.generator_id, "anchored": self.anchored,
        }
        for name in _SCORE_FIELDS:
            v = getattr(self, name)
            rec[name] = None if v is None else round(v, 6)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "RelationTriple":
        return cls(head=rec["head"], predicate=rec["predicate"], tail=rec["tail"],
                   kind=RelationKind(rec.get("kind", "EA")), source=rec.get("source", ""),
                   generator_id=rec.get("generator_id", ""), anchored=rec.get("anchored", True),
                   **{k: rec.get(k) for k in _SCORE_FIELDS})


def _norm_term(text: str) -> str:
    return " ".join(re.sub(r"[_]+", " ", text).casefold().split())


def canonical_predicate(predicate: str) -> str:
    p = re.sub(r"[\s\-]+", "_", predicate.strip().casefold())
    return PREDICATE_SYNONYMS.get(p, p)


def canonical_key(triple: RelationTriple) -> tuple[str, str, str]:
    return (_norm_term(triple.head), canonical_predicate(triple.predicate), _norm_term(triple.tail))


def canonical_verbalization(triple: RelationTriple) -> str:
    h, p, t = canonical_key(triple)
    return f"{h} {p.replace('_', ' ')} {t}"


# -- parsing ------------------------------------------------------------------

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def parse_relation_lines(text: str) -> list[tuple[str, str, str]]:
    """Read ``head | predicate | tail`` lines; bullets and numbering are ignored."""
    out = []
    for line in text.splitlines():
        line = _BULLET.sub("", line.split("\t")[0]).strip()
        if line.count("|") != 2:
            continue
        h, p, t = (x.strip() for x in line.split("|"))
        if h and p and t and _norm_term(h) != _norm_term(t):
            out.append((h, p, t))
    return out


def _parse_relations_strict(text: str) -> list[tuple[str, str, str]]:
    rows = parse_relation_lines(text)
    if not rows and text.strip():
        raise RelationError("could not parse any relation from agent output", text)
    return rows


# -- typing and anchoring -----------------------------------------------------

def classify_kind(head: str, tail: str, known_entities: Iterable[str],
                  known_attributes: Iterable[str]) -> RelationKind:
    """EE when both endpoints are entities, AA when neither is, EA otherwise.

    Unknown endpoints count as attributes.
    """
    entities = {_norm_term(e) for e in known_entities}
    h_ent = _norm_term(head) in entities
    t_ent = _norm_term(tail) in entities
    if h_ent and t_ent:
        return RelationKind.EE
    if not h_ent and not t_ent:
        return RelationKind.AA
    return RelationKind.EA


def anchor_endpoint(name: str, known: Sequence[str], tau_fuzzy: float = 90.0) -> tuple[str, bool]:
    """Snap ``name`` onto a known entity/attribute (exact ignoring case, then fuzzy)."""
    key = _norm_term(name)
    for k in known:
        if _norm_term(k) == key:
            return k, True
    best, best_score = None, tau_fuzzy
    for k in known:
        score = fuzzy_ratio(key, _norm_term(k))
        if score >= best_score and (best is None or score > best_score):
            best, best_score = k, score
    if best is not None:
        return best, True
    return name, False


def _known_names(eavs: Iterable) -> tuple[list[str], list[str]]:
    entities: dict[str, str] = {}
    attributes: dict[str, str] = {}
    for e in eavs:
        entities.setdefault(_norm_term(e.entity), e.entity)
        attributes.setdefault(_norm_term(e.attribute), e.attribute)
        if e.value.strip().casefold() not in ("true", "false", "present", "absent", "yes", "no"):
            attributes.setdefault(_norm_term(e.value), e.value)
    return sorted(entities.values()), sorted(attributes.values())


def build_triples(rows: Iterable[tuple[str, str, str]], eavs: Sequence, *, source: str,
                  generator_id: str, tau_fuzzy: float = 90.0) -> list[RelationTriple]:
    entities, attributes = _known_names(eavs)
    known = entities + [a for a in attributes if _norm_term(a) not in {_norm_term(e) for e in entities}]
    out: list[RelationTriple] = []
    seen = set()
    for h, p, t in rows:
        h2, h_ok = anchor_endpoint(h, known, tau_fuzzy) if known else (h, False)
        t2, t_ok = anchor_endpoint(t, known, tau_fuzzy) if known else (t, False)
        if _norm_term(h2) == _norm_term(t2):
            continue
        triple = RelationTriple(h2, p, t2, classify_kind(h2, t2, entities, attributes),
                                source=source, generator_id=generator_id, anchored=h_ok and t_ok)
        if triple.key not in seen:
            seen.add(triple.key)
            out.append(triple)
    return out


def _relation_prompt_context(report: ClinicalReport, eavs: Sequence, variant: int) -> dict:
    entities, attributes = _known_names(eavs)
    return {
        "variant": variant,
        "variant_instruction": VARIANT_INSTRUCTIONS[variant % len(VARIANT_INSTRUCTIONS)],
        "entities": "; ".join(entities) or "(none)",
        "attributes": "; ".join(attributes) or "(none)",
        "doc": report.narrative,
    }


def generate_candidates(report: ClinicalReport, eavs: Sequence, extractor: CompletionProvider, *,
                        variant: int = 0, tau_fuzzy: float = 90.0,
                        temperature: float = 0.0) -> list[RelationTriple]:
    prompt = render_prompt("generate_relations", _relation_prompt_context(report, eavs, variant))
    resp = complete(AgentRequest(AgentRole.EXTRACTOR, prompt, temperature=temperature), extractor)
    rows = _parse_relations_strict(resp.text)
    return build_triples(rows, eavs, source=report.patient_id, generator_id=resp.provider_id,
                         tau_fuzzy=tau_fuzzy)


def _candidate_block(triples: Iterable[RelationTriple]) -> str:
    return "\n".join(f"{t.head} | {t.predicate} | {t.tail}" for t in triples) or "(none)"


def review_candidates(report: ClinicalReport, eavs: Sequence, candidates: Sequence[RelationTriple],
                      provider: CompletionProvider, role: AgentRole, *,
                      tau_fuzzy: float = 90.0) -> list[RelationTriple]:
    """Ask the Refiner (refine) or Adversary (validate) for its own relation set."""
    template = "refine_relations" if role is AgentRole.REFINER else "validate_relations"
    prompt = render_prompt(template, {"candidates": _candidate_block(candidates), "doc": report.narrative})
    resp = complete(AgentRequest(role, prompt), provider)
    return build_triples(parse_relation_lines(resp.text), eavs, source=report.patient_id,
                         generator_id=resp.provider_id, tau_fuzzy=tau_fuzzy)


# -- scoring ------------------------------------------------------------------

_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)")


def parse_judgment(text: str) -> float:
    m = _NUMBER.search(text)
    if not m:
        raise JudgmentError(f"judge returned no numeric score: {text[:80]!r}", text)
    value = float(m.group())
    if not 0.0 <= value <= 1.0:
        logger.warning("judge score %s outside [0, 1]; clamping", value)
        value = min(1.0, max(0.0, value))
    return value


def judge(triple: RelationTriple, context: str, provider: CompletionProvider) -> float:
    if not context.strip():
        raise ValueError("judge needs a non-empty source excerpt")
    prompt = render_prompt("judge", {"triple": f"{triple.head} | {triple.predicate} | {triple.tail}",
                                     "context": context})
    resp = complete(AgentRequest(AgentRole.JUDGE, prompt), provider)
    return parse_judgment(resp.text)


@dataclass(frozen=True)
class PerturbationSet:
    original: RelationTriple
    variants: tuple[tuple[RelationTriple, Verdict], ...] = ()


def parse_perturbations(original: RelationTriple, text: str) -> PerturbationSet:
    variants = []
    for line in text.splitlines():
        if "\t" in line:
            body, _, verdict = line.rpartition("\t")
        else:
            body, verdict = line, ""
        rows = parse_relation_lines(body)
        if not rows:
            continue
        h, p, t = rows[0]
        variant = RelationTriple(h, p, t, original.kind, source=original.source)
        variants.append((variant, Verdict.parse(verdict)))
    return PerturbationSet(original, tuple(variants))


def perturb(triple: RelationTriple, context: str, adversary: CompletionProvider,
            k: int = DEFAULT_PERTURBATIONS) -> PerturbationSet:
    prompt = render_prompt("perturb", {"k": k, "triple": f"{triple.head} | {triple.predicate} | {triple.tail}",
                                       "context": context})
    resp = complete(AgentRequest(AgentRole.ADVERSARY, prompt), adversary)
    return parse_perturbations(triple, resp.text)


def contradiction_rate(pset: PerturbationSet) -> float:
    if not pset.variants:
        raise ValueError("contradiction rate needs at least one perturbation")
    bad = sum(1 for _, v in pset.variants if v is Verdict.CONTRADICTORY)
    return bad / len(pset.variants)


def filter_trusted(triples: Iterable[RelationTriple], delta_j: float = DEFAULT_DELTA_J,
                   epsilon: float = DEFAULT_EPSILON) -> list[RelationTriple]:
    """Keep triples with J strictly above ``delta_j`` and xi at most ``epsilon``."""
    return [t for t in triples
            if t.J is not None and t.xi is not None and t.J > delta_j and t.xi <= epsilon]


def self_consistency(triple: RelationTriple, variant_sets: Sequence[Iterable[RelationTriple]]) -> float:
    if len(variant_sets) < 1:
        raise ValueError("self-consistency needs at least one variant set")
    key = triple.key
    hits = sum(1 for s in variant_sets if any(t.key == key for t in s))
    return hits / len(variant_sets)


def content_tokens(text: str) -> set[str]:
    return {w for w in re.findall(r"\w+", text.casefold().replace("_", " ")) if w not in STOPWORDS}


def token_f1(a: str, b: str) -> float:
    ta, tb = content_tokens(a), content_tokens(b)
    common = len(ta & tb)
    if not common:
        return 0.0
    precision = common / len(ta)
    recall = common / len(tb)
    return 2 * precision * recall / (precision + recall)


def evidence_alignment(triple: RelationTriple, report: ClinicalReport) -> float:
    """Best token-overlap F1 between the verbalized triple and any sentence."""
    text = triple.verbalize()
    return max((token_f1(text, s.text) for s in report.sentences), default=0.0)


def evidence_context(triple: RelationTriple, report: ClinicalReport, top: int = 2) -> str:
    scored = sorted(((token_f1(triple.verbalize(), s.text), s.index) for s in report.sentences),
                    key=lambda x: (-x[0], x[1]))
    picked = sorted(i for score, i in scored[:top] if score > 0)
    if not picked:
        picked = [s.index for s in report.sentences[:3]]
    return " ".join(report.sentences[i].text for i in picked) or report.narrative


@dataclass(frozen=True)
class TrustScore:
    R: Optional[float]
    C: Optional[float]
    J: Optional[float]
    T: float
    weights: tuple[float, float, float]


def composite_trust(R: Optional[float], C: Optional[float], J: Optional[float],
                    weights: Sequence[float] = DEFAULT_LAMBDAS) -> TrustScore:
    """Weighted sum of evidence, consistency and judgment.

    A missing component drops out and the remaining weights are rescaled to
    sum to one.
    """
    if len(weights) != 3:
        raise ValueError("need exactly three weights")
    if any(w < 0 for w in weights):
        raise ValueError("trust weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"trust weights must sum to 1, got {sum(weights)}")
    parts = [(w, x) for w, x in zip(weights, (R, C, J)) if x is not None]
    if not parts:
        raise ValueError("at least one trust component is required")
    if len(parts) == 3:
        T = weights[0] * R + weights[1] * C + weights[2] * J
    else:
        total = sum(w for w, _ in parts)
        if total == 0:
            raise ValueError("remaining trust weights are all zero")
        T = sum(w * x for w, x in parts) / total
    return TrustScore(R, C, J, T, tuple(weights))


def passes_trust(T: float, delta_t: float = DEFAULT_DELTA_T) -> bool:
    return T >= delta_t


# -- consensus and redundancy -------------------------------------------------

@dataclass
class ConsensusResult:
    accepted: list[RelationTriple] = field(default_factory=list)
    flagged: list[tuple[RelationTriple, Reason]] = field(default_factory=list)
    support: dict[tuple[str, str, str], tuple[str, ...]] = field(default_factory=dict)


def consensus_accept(per_model_sets: Mapping[str, Iterable[RelationTriple]],
                     compliant: Optional[Callable[[RelationTriple], bool]] = None,
                     min_models: int = 2) -> ConsensusResult:
    """Accept triples proposed by at least ``min_models`` models.

    When accepted triples disagree on the predicate for the same head and
    tail, ontology-compliant variants (per ``compliant``) win and the others
    are flagged as conflicts.
    """
    if len(per_model_sets) < 2:
        raise ValueError("consensus needs at least two model sets")
    support: dict[tuple, list[str]] = defaultdict(list)
    representative: dict[tuple, RelationTriple] = {}
    for model in sorted(per_model_sets):
        for t in per_model_sets[model]:
            key = t.key
            if model not in support[key]:
                support[key].append(model)
            representative.setdefault(key, t)

    result = ConsensusResult(support={k: tuple(v) for k, v in sorted(support.items())})
    accepted_keys = sorted(k for k, models in support.items() if len(models) >= min_models)
    for key in sorted(k for k in support if k not in set(accepted_keys)):
        result.flagged.append((representative[key], Reason.SINGLE_MODEL))

    if compliant is not None:
        groups: dict[tuple[str, str], list[tuple]] = defaultdict(list)
        for key in accepted_keys:
            groups[(key[0], key[2])].append(key)
        losers = set()
        for keys in groups.values():
            if len(keys) < 2:
                continue
            ok = [k for k in keys if compliant(representative[k])]
            if ok:
                losers.update(k for k in keys if k not in ok)
        for key in sorted(losers):
            result.flagged.append((representative[key], Reason.CONFLICT))
        accepted_keys = [k for k in accepted_keys if k not in losers]

    result.accepted = [representative[k] for k in accepted_keys]
    result.flagged.sort(key=lambda fr: (fr[0].key, fr[1].value))
    return result


@dataclass(frozen=True)
class RedundancyCluster:
    members: tuple[RelationTriple, ...]
    representative: RelationTriple

    @property
    def redundant(self) -> tuple[RelationTriple, ...]:
        return tuple(m for m in self.members if m is not self.representative)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _rep_key(t: RelationTriple):
    return (-(t.T if t.T is not None else -1.0), t.head, t.predicate, t.tail)


def redundancy_pairs(triples: Sequence[RelationTriple],
                     embed_provider: Optional[EmbeddingProvider] = None,
                     gamma_red: float = DEFAULT_GAMMA_RED) -> list[RedundancyCluster]:
    """Single-linkage clusters of triples whose embeddings have cosine above ``gamma_red``.

    Triples are embedded in canonical form (casefolded, predicate synonyms
    collapsed), so paraphrased predicates such as confirms/verifies coincide.
    """
    if not 0.0 < gamma_red <= 1.0:
        raise ValueError("gamma_red must lie in (0, 1]")
    embedder = embed_provider or HashingEmbedder()
    vecs = [embedder.embed(canonical_verbalization(t)) for t in triples]
    parent = list(range(len(triples)))
    for i in range(len(triples)):
        for j in range(i + 1, len(triples)):
            if cosine(vecs[i], vecs[j]) > gamma_red:
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[RelationTriple]] = defaultdict(list)
    for i, t in enumerate(triples):
        groups[_find(parent, i)].append(t)
    clusters = []
    for members in groups.values():
        ordered = tuple(sorted(members, key=_rep_key))
        clusters.append(RedundancyCluster(ordered, ordered[0]))
    clusters.sort(key=lambda c: _rep_key(c.representative))
    return clusters


def semantic_gaps(terms: Sequence[str], edges: Iterable[tuple[str, str]],
                  embed_provider: Optional[EmbeddingProvider] = None,
                  gamma: float = DEFAULT_GAMMA_RED) -> list[tuple[str, ...]]:
    """Groups of near-synonymous graph terms with no edge between any two members.

    Reporting only; nothing is inserted into the graph.
    """
    embedder = embed_provider or HashingEmbedder()
    uniq = sorted({t for t in terms if t.strip()}, key=str.casefold)
    vecs = [embedder.embed(t) for t in uniq]
    parent = list(range(len(uniq)))
    for i in range(len(uniq)):
        for j in range(i + 1, len(uniq)):
            if cosine(vecs[i], vecs[j]) > gamma:
                ri, rj = _find(parent, i), _find(parent, j)
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[str]] = defaultdict(list)
    for i, t in enumerate(uniq):
        groups[_find(parent, i)].append(t)
    linked = {frozenset((_norm_term(a), _norm_term(b))) for a, b in edges}
    gaps = []
    for members in groups.values():
        if len(members) < 2:
            continue
        norm = [_norm_term(m) for m in members]
        if not any(frozenset((a, b)) in linked for i, a in enumerate(norm) for b in norm[i + 1:]):
            gaps.append(tuple(members))
    return sorted(gaps)


# -- orchestration --------------------------------------------------------------

@dataclass
class RelationConfig:
    delta_j: float = DEFAULT_DELTA_J
    epsilon_xi: float = DEFAULT_EPSILON
    lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS
    delta_t: float = DEFAULT_DELTA_T
    gamma_red: float = DEFAULT_GAMMA_RED
    n_variants: int = DEFAULT_VARIANTS
    n_perturbations: int = DEFAULT_PERTURBATIONS
    tau_fuzzy: float = 90.0


@dataclass
class RelationOutcome:
    patient_id: str
    scored: list[RelationTriple] = field(default_factory=list)
    trusted: list[RelationTriple] = field(default_factory=list)
    quarantine: list[tuple[RelationTriple, Reason]] = field(default_factory=list)
    per_model: dict[str, list[RelationTriple]] = field(default_factory=dict)
    gaps: list[tuple[str, ...]] = field(default_factory=list)


def discover_relations(report: ClinicalReport, eavs: Sequence,
                       agents: Mapping[AgentRole, CompletionProvider],
                       cfg: Optional[RelationConfig] = None, *,
                       embedder: Optional[EmbeddingProvider] = None,
                       compliant: Optional[Callable[[RelationTriple], bool]] = None) -> RelationOutcome:
    """Generate, cross-check, score and filter the relations of one report."""
    cfg = cfg or RelationConfig()
    embedder = embedder or HashingEmbedder()
    extractor = agents[AgentRole.EXTRACTOR]
    outcome = RelationOutcome(report.patient_id)

    candidates = generate_candidates(report, eavs, extractor, tau_fuzzy=cfg.tau_fuzzy)
    refined = review_candidates(report, eavs, candidates, agents[AgentRole.REFINER], AgentRole.REFINER,
                                tau_fuzzy=cfg.tau_fuzzy)
    validated = review_candidates(report, eavs, candidates, agents[AgentRole.ADVERSARY],
                                  AgentRole.ADVERSARY, tau_fuzzy=cfg.tau_fuzzy)
    outcome.per_model = {
        AgentRole.EXTRACTOR.value: candidates,
        AgentRole.REFINER.value: refined,
        AgentRole.ADVERSARY.value: validated,
    }
    consensus = consensus_accept(outcome.per_model, compliant)
    outcome.quarantine.extend(consensus.flagged)

    variant_sets = [
        generate_candidates(report, eavs, extractor, variant=v, tau_fuzzy=cfg.tau_fuzzy,
                            temperature=VARIANT_TEMPERATURE)
        for v in range(1, cfg.n_variants + 1)
    ]

    scored: list[RelationTriple] = []
    for t in consensus.accepted:
        context = evidence_context(t, report)
        try:
            J = judge(t, context, agents[AgentRole.JUDGE])
        except JudgmentError as exc:
            logger.warning("%s: unscored relation %s: %s", report.patient_id, t.key, exc)
            outcome.quarantine.append((t, Reason.UNSCORED))
            continue
        pset = perturb(t, context, agents[AgentRole.ADVERSARY], cfg.n_perturbations)
        xi = contradiction_rate(pset) if pset.variants else None
        C = self_consistency(t, variant_sets)
        R = evidence_alignment(t, report)
        T = composite_trust(R, C, J, cfg.lambdas).T
        scored.append(t.with_scores(J=J, xi=xi, C=C, R=R, T=min(1.0, max(0.0, T))))
    outcome.scored = scored

    passed = set(id(t) for t in filter_trusted(scored, cfg.delta_j, cfg.epsilon_xi))
    gated = []
    for t in scored:
        if id(t) not in passed:
            if t.xi is None:
                outcome.quarantine.append((t, Reason.UNSCORED))
            elif t.J is None or t.J <= cfg.delta_j:
                outcome.quarantine.append((t, Reason.LOW_J))
            else:
                outcome.quarantine.append((t, Reason.HIGH_XI))
        elif not passes_trust(t.T, cfg.delta_t):
            outcome.quarantine.append((t, Reason.LOW_T))
        else:
            gated.append(t)

    for cluster in redundancy_pairs(gated, embedder, cfg.gamma_red):
        outcome.trusted.append(cluster.representative)
        outcome.quarantine.extend((m, Reason.REDUNDANT) for m in cluster.redundant)
    outcome.trusted.sort(key=lambda t: t.key)
    outcome.quarantine.sort(key=lambda fr: (fr[0].key, fr[1].value))

    terms = [t.head for t in candidates] + [t.tail for t in candidates]
    outcome.gaps = semantic_gaps(terms, [(t.head, t.tail) for t in outcome.trusted], embedder, cfg.gamma_red)
    return outcome
