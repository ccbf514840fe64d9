"""Three-stage grounding of EAV triples against their source narrative.

Stage 1 tries literal evidence (exact, numeric-with-unit regex, fuzzy
windows, word n-grams, negation-aware boolean inference). Stage 2 adds
normalization heuristics (case folding, negation phrase patterns, lemmas,
synonyms). Stage 3 handles sentence-level negation, typos and a dictionary
of known misspellings. The first technique that succeeds decides the
result; a stage-1 hit is *grounded*, a later hit is *rescued*, and a triple
no technique supports is *hallucinated*.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

from kgf.corpus import ClinicalReport, segment_sentences
from kgf.extraction import EavTriple
from kgf.grounding.fuzzy import fuzzy_ratio
from kgf.grounding.lexicon import Lexicon, Token, default_lexicon, tokenize

Span = tuple[int, int]


class Technique(str, enum.Enum):
    EXACT = "Exact"
    REGEX = "Regex"
    FUZZY = "Fuzzy"
    NGRAM = "NGram"
    BOOLEAN_INFERENCE = "BooleanInference"
    CASE_INSENSITIVE = "CaseInsensitive"
    NEGATION_PATTERN = "NegationPattern"
    LEMMA = "Lemma"
    SYNONYM = "Synonym"
    SENTENCE_NEGATION = "SentenceNegation"
    TYPO_FIX = "TypoFix"
    EXPLICIT_FIX = "ExplicitFix"


class Status(str, enum.Enum):
    GROUNDED = "Grounded"
    RESCUED = "Rescued"
    HALLUCINATED = "Hallucinated"


STATUS_RANK = {Status.HALLUCINATED: 0, Status.RESCUED: 1, Status.GROUNDED: 2}


@dataclass(frozen=True)
class MatchResult:
    triple_id: str
    status: Status
    stage: Optional[int] = None
    technique: Optional[Technique] = None
    matched_span: Optional[Span] = None
    score: float = 0.0

    def __post_init__(self):
        if (self.status is Status.HALLUCINATED) != (self.matched_span is None):
            raise ValueError("matched_span must be present exactly when the triple is supported")
        if self.status is Status.GROUNDED and self.stage != 1:
            raise ValueError("grounded results come from stage 1")
        if self.status is Status.RESCUED and self.stage not in (2, 3):
            raise ValueError("rescued results come from stage 2 or 3")

    def to_record(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "status": self.status.value,
            "stage": self.stage,
            "technique": self.technique.value if self.technique else None,
            "span": list(self.matched_span) if self.matched_span else None,
            "score": round(self.score, 6),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "MatchResult":
        return cls(triple_id=rec["triple_id"], status=Status(rec["status"]), stage=rec.get("stage"),
                   technique=Technique(rec["technique"]) if rec.get("technique") else None,
                   matched_span=tuple(rec["span"]) if rec.get("span") else None,
                   score=rec.get("score", 0.0))


@dataclass
class GroundingConfig:
    tau_fuzzy: float = 90.0
    gamma_ngram: float = 0.6
    tau_typo: float = 80.0
    window_slack: int = 3
    stages: tuple[int, ...] = (1, 2, 3)
    lexicon: Lexicon = field(default_factory=default_lexicon)


@dataclass
class GroundingReport:
    patient_id: str
    triples: int = 0
    grounded: int = 0
    rescued: int = 0
    hallucinated: int = 0
    coverage: float = 0.0
    correctness_rate: float = 0.0
    hallucination_rate: float = 0.0
    rescue_rate: float = 0.0
    supported_rate: float = 0.0
    per_technique_counts: dict[str, int] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "totals": {"triples": self.triples, "grounded": self.grounded,
                       "rescued": self.rescued, "hallucinated": self.hallucinated},
            "coverage": self.coverage,
            "correctness_rate": self.correctness_rate,
            "hallucination_rate": self.hallucination_rate,
            "rescue_rate": self.rescue_rate,
            "supported_rate": self.supported_rate,
            "per_technique_counts": dict(sorted(self.per_technique_counts.items())),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GroundingReport":
        totals = rec["totals"]
        return cls(patient_id=rec["patient_id"], triples=totals["triples"],
                   grounded=totals["grounded"], rescued=totals["rescued"],
                   hallucinated=totals["hallucinated"], coverage=rec["coverage"],
                   correctness_rate=rec["correctness_rate"],
                   hallucination_rate=rec["hallucination_rate"],
                   rescue_rate=rec["rescue_rate"], supported_rate=rec["supported_rate"],
                   per_technique_counts=dict(rec["per_technique_counts"]))


# -- shared helpers -----------------------------------------------------------

POSITIVE_VALUES = frozenset({"true", "present", "yes", "positive"})
NEGATIVE_VALUES = frozenset({"false", "absent", "no", "negative", "none"})

# attribute prefixes that carry no lexical content ("observation_chills")
_ATTRIBUTE_PREFIXES = ("observation_", "finding_", "symptom_", "condition_", "has_", "history_of_")

_NUMBER_UNIT = re.compile(
    r"\s*(?P<num>[<>≤≥~]?\s*[-+]?\d+(?:[.,]\d+)?)\s*(?P<unit>[A-Za-z%µμ°][A-Za-z0-9%µμ°/^.²³·]*)?\s*")


def polarity(value: str) -> Optional[bool]:
    """True/False for boolean-like values, None otherwise."""
    v = value.strip().casefold()
    if v in POSITIVE_VALUES:
        return True
    if v in NEGATIVE_VALUES:
        return False
    return None


def attribute_term(attribute: str) -> str:
    """Human-readable finding name inside an attribute identifier."""
    a = attribute.strip()
    low = a.casefold()
    for prefix in _ATTRIBUTE_PREFIXES:
        if low.startswith(prefix) and len(a) > len(prefix):
            a = a[len(prefix):]
            break
    return " ".join(re.sub(r"[_\-]+", " ", a).split())


class _Doc:
    """Per-report caches: tokens by sentence, lemma keys, folded text."""

    def __init__(self, text: str, lexicon: Lexicon, sentences=None):
        self.text = text
        self.lexicon = lexicon
        sentences = sentences if sentences is not None else segment_sentences(text)
        self.sentence_tokens: list[list[Token]] = []
        for sent in sentences:
            self.sentence_tokens.append([
                Token(t.text, t.start + sent.start, t.end + sent.start) for t in tokenize(sent.text)])
        self.tokens = [t for toks in self.sentence_tokens for t in toks]
        self._lemmas: dict[int, list[str]] = {}
        self.word_starts = sorted({0} | {
            i for i in range(1, len(text)) if text[i].isalnum() and not text[i - 1].isalnum()})

    def lemma_keys(self, sent_index: int) -> list[str]:
        keys = self._lemmas.get(sent_index)
        if keys is None:
            keys = [self.lexicon.lemma(t.text) for t in self.sentence_tokens[sent_index]]
            self._lemmas[sent_index] = keys
        return keys


def _occurrences(keys: Sequence[str], phrase: Sequence[str]) -> Iterable[int]:
    n = len(phrase)
    if n == 0:
        return
    for i in range(len(keys) - n + 1):
        if list(keys[i:i + n]) == list(phrase):
            yield i


def _find_phrase(doc: _Doc, phrase_keys: Sequence[str], use_lemmas: bool) -> Optional[Span]:
    for s, toks in enumerate(doc.sentence_tokens):
        keys = doc.lemma_keys(s) if use_lemmas else [t.norm for t in toks]
        for i in _occurrences(keys, phrase_keys):
            return (toks[i].start, toks[i + len(phrase_keys) - 1].end)
    return None


def _polarity_match(doc: _Doc, phrase_keys: Sequence[str], want_positive: bool,
                    use_lemmas: bool) -> Optional[Span]:
    """Span of a term occurrence whose negation status agrees with the value."""
    if not phrase_keys:
        return None
    for s, toks in enumerate(doc.sentence_tokens):
        keys = doc.lemma_keys(s) if use_lemmas else [t.norm for t in toks]
        for i in _occurrences(keys, phrase_keys):
            negated = doc.lexicon.is_negated(toks, i)
            if negated != want_positive:
                return (toks[i].start, toks[i + len(phrase_keys) - 1].end)
    return None


def _keys(text: str, lexicon: Lexicon, use_lemmas: bool) -> list[str]:
    if use_lemmas:
        return lexicon.lemmas(text)
    return [t.norm for t in tokenize(text)]


Hit = tuple[Span, float]


# -- stage 1 ------------------------------------------------------------------

def _exact(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    i = doc.text.find(triple.value)
    return ((i, i + len(triple.value)), 1.0) if i >= 0 else None


def numeric_value_pattern(value: str) -> Optional[re.Pattern]:
    """Spacing-tolerant pattern for values such as ``1.2 mg/dL``; None if not numeric."""
    m = _NUMBER_UNIT.fullmatch(value)
    if not m:
        return None
    num = re.sub(r"\s+", "", m.group("num"))
    pattern = r"(?<![\d.,])" + r"\s*".join(re.escape(c) for c in num) + r"(?![\d])"
    unit = m.group("unit")
    if unit:
        unit_pat = r"\s*/\s*".join(re.escape(part) for part in unit.split("/"))
        pattern += r"\s*" + unit_pat + r"(?![A-Za-z])"
    return re.compile(pattern)


def _regex(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    pat = numeric_value_pattern(triple.value)
    if pat is None:
        return None
    m = pat.search(doc.text)
    return ((m.start(), m.end()), 1.0) if m else None


def _fuzzy(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    value = triple.value
    n = len(value)
    if n == 0:
        return None
    best: Optional[Hit] = None
    lengths = range(max(1, n - cfg.window_slack), n + cfg.window_slack + 1)
    for start in doc.word_starts:
        for length in lengths:
            if start + length > len(doc.text):
                break
            # cheap upper bound: ratio cannot exceed 200*min/(n+length)
            if 200.0 * min(n, length) / (n + length) <= cfg.tau_fuzzy:
                continue
            score = fuzzy_ratio(value, doc.text[start:start + length])
            if score > cfg.tau_fuzzy and (best is None or score > best[1]):
                best = ((start, start + length), score)
    return best


def _jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def _ngram(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    value_tokens = [t.text for t in tokenize(triple.value)]
    if not value_tokens:
        return None
    target = set(value_tokens)
    n = len(value_tokens)
    best: Optional[Hit] = None
    for toks in doc.sentence_tokens:
        for size in range(max(1, n - 1), n + 2):
            for i in range(len(toks) - size + 1):
                window = toks[i:i + size]
                score = _jaccard(target, {t.text for t in window})
                if score > cfg.gamma_ngram and (best is None or score > best[1]):
                    best = ((window[0].start, window[-1].end), score)
    return best


def _boolean(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    pol = polarity(triple.value)
    if pol is None:
        return None
    span = _polarity_match(doc, [t.norm for t in tokenize(triple.attribute)], pol, False)
    return (span, 1.0) if span else None


# -- stage 2 ------------------------------------------------------------------

def _case_insensitive(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    m = re.search(re.escape(triple.value), doc.text, re.IGNORECASE)
    return ((m.start(), m.end()), 1.0) if m else None


def _negation_pattern(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    if polarity(triple.value) is not False:
        return None
    term = attribute_term(triple.attribute)
    if not term:
        return None
    cues = "|".join(r"\s+".join(re.escape(w) for w in cue) for cue in doc.lexicon.negation_cues)
    term_pat = r"\s+".join(re.escape(w) for w in term.split())
    pat = re.compile(rf"\b(?:{cues})\s+(?:any\s+)?(?:history\s+of\s+)?({term_pat})\b", re.IGNORECASE)
    m = pat.search(doc.text)
    return ((m.start(), m.end()), 1.0) if m else None


def _lemma(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    lex = doc.lexicon
    pol = polarity(triple.value)
    if pol is None:
        span = _find_phrase(doc, _keys(triple.value, lex, True), True)
    else:
        span = _polarity_match(doc, _keys(attribute_term(triple.attribute), lex, True), pol, True)
    return (span, 1.0) if span else None


def _synonym(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    lex = doc.lexicon
    pol = polarity(triple.value)
    if pol is None:
        for syn in lex.synonyms_of(triple.value):
            span = _find_phrase(doc, _keys(syn, lex, False), False)
            if span:
                return span, 1.0
        return None
    for syn in lex.synonyms_of(attribute_term(triple.attribute)):
        span = _polarity_match(doc, _keys(syn, lex, False), pol, False)
        if span:
            return span, 1.0
    return None


# -- stage 3 ------------------------------------------------------------------

def _sentence_negation(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    """Locate the sentence that best matches the triple's terms; confirm a
    negative value when a cue governs one of those terms there."""
    if polarity(triple.value) is not False:
        return None
    lex = doc.lexicon
    terms = [k for k in (_keys(attribute_term(triple.attribute), lex, True),
                         _keys(triple.entity, lex, True)) if k]
    if not terms:
        return None
    wanted = {k for term in terms for k in term}
    ranked = []
    for s in range(len(doc.sentence_tokens)):
        overlap = len(wanted & set(doc.lemma_keys(s)))
        if overlap:
            ranked.append((-overlap, s))
    for _, s in sorted(ranked):
        toks = doc.sentence_tokens[s]
        keys = doc.lemma_keys(s)
        for term in terms:
            for i in _occurrences(keys, term):
                if lex.is_negated(toks, i):
                    return (toks[i].start, toks[i + len(term) - 1].end), 1.0
    return None


def _typo_fix(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    if polarity(triple.value) is not None:
        return None
    want = [t.norm for t in tokenize(triple.value)]
    if not want:
        return None
    best: Optional[Hit] = None
    for toks in doc.sentence_tokens:
        for i in range(len(toks) - len(want) + 1):
            window = toks[i:i + len(want)]
            scores = [fuzzy_ratio(w, t.norm) for w, t in zip(want, window)]
            score = min(scores)
            if score > cfg.tau_typo and (best is None or score > best[1]):
                best = ((window[0].start, window[-1].end), score)
    return best


STAGE1: tuple[tuple[Technique, Callable], ...] = (
    (Technique.EXACT, _exact),
    (Technique.REGEX, _regex),
    (Technique.FUZZY, _fuzzy),
    (Technique.NGRAM, _ngram),
    (Technique.BOOLEAN_INFERENCE, _boolean),
)
STAGE2: tuple[tuple[Technique, Callable], ...] = (
    (Technique.CASE_INSENSITIVE, _case_insensitive),
    (Technique.NEGATION_PATTERN, _negation_pattern),
    (Technique.LEMMA, _lemma),
    (Technique.SYNONYM, _synonym),
)


def _explicit_fix(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[Hit]:
    """Rewrite dictionary misspellings in text and triple, then re-run stages 1-2."""
    lex = doc.lexicon
    fixed_text, index = lex.apply_fixes(doc.text)
    fixed = replace(triple,
                    entity=lex.apply_fixes(triple.entity)[0],
                    attribute=lex.apply_fixes(triple.attribute)[0],
                    value=lex.apply_fixes(triple.value)[0])
    if fixed_text == doc.text and fixed == triple:
        return None
    fixed_doc = doc if fixed_text == doc.text else _Doc(fixed_text, lex)
    for _, fn in STAGE1 + STAGE2:
        hit = fn(fixed, fixed_doc, cfg)
        if hit:
            (s, e), score = hit
            if fixed_doc is not doc:
                s, e = index[s], index[e - 1] + 1
            return (s, e), score
    return None


STAGE3: tuple[tuple[Technique, Callable], ...] = (
    (Technique.SENTENCE_NEGATION, _sentence_negation),
    (Technique.TYPO_FIX, _typo_fix),
    (Technique.EXPLICIT_FIX, _explicit_fix),
)

STAGES = {1: STAGE1, 2: STAGE2, 3: STAGE3}
STAGE_OF = {tech: stage for stage, techs in STAGES.items() for tech, _ in techs}


def _run_stage(stage: int, triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> Optional[MatchResult]:
    for technique, fn in STAGES[stage]:
        hit = fn(triple, doc, cfg)
        if hit:
            span, score = hit
            status = Status.GROUNDED if stage == 1 else Status.RESCUED
            return MatchResult(triple.triple_id, status, stage, technique, span, score)
    return None


def _doc_for(report: ClinicalReport, cfg: GroundingConfig) -> _Doc:
    return _Doc(report.narrative, cfg.lexicon, report.sentences)


def stage1_match(triple: EavTriple, report: ClinicalReport,
                 cfg: Optional[GroundingConfig] = None) -> Optional[MatchResult]:
    cfg = cfg or GroundingConfig()
    return _run_stage(1, triple, _doc_for(report, cfg), cfg)


def stage2_match(triple: EavTriple, report: ClinicalReport,
                 cfg: Optional[GroundingConfig] = None) -> Optional[MatchResult]:
    cfg = cfg or GroundingConfig()
    return _run_stage(2, triple, _doc_for(report, cfg), cfg)


def stage3_match(triple: EavTriple, report: ClinicalReport,
                 cfg: Optional[GroundingConfig] = None) -> Optional[MatchResult]:
    cfg = cfg or GroundingConfig()
    return _run_stage(3, triple, _doc_for(report, cfg), cfg)


def match_triple(triple: EavTriple, doc: _Doc, cfg: GroundingConfig) -> MatchResult:
    for stage in sorted(cfg.stages):
        result = _run_stage(stage, triple, doc, cfg)
        if result:
            return result
    return MatchResult(triple.triple_id, Status.HALLUCINATED)


def summarize(patient_id: str, results: Sequence[MatchResult]) -> GroundingReport:
    counts = Counter(r.status for r in results)
    total = len(results)
    grounded = counts[Status.GROUNDED]
    rescued = counts[Status.RESCUED]
    hallucinated = counts[Status.HALLUCINATED]

    def frac(num: int, den: int) -> float:
        return num / den if den else 0.0

    return GroundingReport(
        patient_id=patient_id,
        triples=total,
        grounded=grounded,
        rescued=rescued,
        hallucinated=hallucinated,
        coverage=frac(grounded, total),
        correctness_rate=frac(grounded, total),
        hallucination_rate=frac(hallucinated, total),
        rescue_rate=frac(rescued, rescued + hallucinated),
        supported_rate=frac(grounded + rescued, total),
        per_technique_counts=dict(Counter(r.technique.value for r in results if r.technique)),
    )


def ground_triples(triples: Sequence[EavTriple], report: ClinicalReport,
                   cfg: Optional[GroundingConfig] = None) -> tuple[list[MatchResult], GroundingReport]:
    cfg = cfg or GroundingConfig()
    doc = _doc_for(report, cfg)
    results = [match_triple(t, doc, cfg) for t in triples]
    return results, summarize(report.patient_id, results)
