from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from kgf.corpus import ClinicalReport
from kgf.extraction import EavTriple, FhirResourceType
from kgf.grounding.fuzzy import fuzzy_ratio, indel_distance, lcs_length
from kgf.grounding.lexicon import Lexicon, default_lexicon, tokenize
from kgf.grounding.matching import (
    STATUS_RANK,
    GroundingConfig,
    GroundingReport,
    MatchResult,
    Status,
    Technique,
    attribute_term,
    ground_triples,
    numeric_value_pattern,
    polarity,
    stage1_match,
    stage2_match,
    stage3_match,
    summarize,
)

import grounding_cases as gc


def dp_lcs(a: str, b: str) -> int:
    """Textbook O(nm) table, the oracle for the bit-parallel version."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


short = st.text(alphabet="abcdeXY 9-", max_size=20)


@given(short, short)
def test_lcs_matches_dp(a, b):
    assert lcs_length(a, b) == dp_lcs(a, b)
    assert indel_distance(a, b) == len(a) + len(b) - 2 * dp_lcs(a, b)


@given(short, short)
def test_ratio_symmetric_and_bounded(a, b):
    r = fuzzy_ratio(a, b)
    assert r == fuzzy_ratio(b, a)
    assert 0.0 <= r <= 100.0
    assert (r == 100.0) == (a == b)


def test_ratio_known_values():
    assert fuzzy_ratio("FOLFRINOX", "FOLFIRINOX") == pytest.approx(94.7368, abs=1e-4)
    assert fuzzy_ratio("", "") == 100.0
    assert fuzzy_ratio("abc", "") == 0.0


# -- lexicon --------------------------------------------------------------------

def test_lemmas_and_irregulars():
    lex = default_lexicon()
    assert lex.lemma("coughs") == lex.lemma("coughing") == "cough"
    assert lex.lemma("febrile") == "fever"
    assert lex.lemma("metastasis") == "metastasis"


def test_negation_scope_and_breakers():
    lex = default_lexicon()
    toks = tokenize("denies fever but reports chills")
    assert lex.is_negated(toks, 1)
    assert not lex.is_negated(toks, 4)
    far = tokenize("no a b c d e fever")
    assert not lex.is_negated(far, 6)


def test_fix_index_maps_back():
    lex = default_lexicon()
    fixed, index = lex.apply_fixes("A pancretic mass")
    assert fixed == "A pancreatic mass"
    assert len(index) == len(fixed)
    assert index[-1] == len("A pancretic mass") - 1


def test_custom_lexicon_files(tmp_path):
    syn = tmp_path / "syn.txt"
    syn.write_text("foo|bar\n", encoding="utf-8")
    lex = Lexicon.load(synonyms=syn)
    assert lex.synonyms_of("foo") == ["bar"]


# -- helpers --------------------------------------------------------------------

def test_polarity_and_attribute_term():
    assert polarity("Present") is True and polarity("absent") is False and polarity("12") is None
    assert attribute_term("observation_chills") == "chills"
    assert attribute_term("weight_loss") == "weight loss"


def test_numeric_pattern_spacing():
    pat = numeric_value_pattern("1.2 mg/dL")
    assert pat.search("level 1.2mg / dL today")
    assert not pat.search("level 11.2 mg/dL")
    assert numeric_value_pattern("high") is None


# -- techniques --------------------------------------------------------------------

@pytest.mark.parametrize("i", range(len(gc.TECHNIQUE_ROWS)))
def test_each_technique_fixture(i):
    row = gc.TECHNIQUE_ROWS[i]
    triple = gc.triples([row[:3]])[0]
    results, _ = ground_triples([triple], gc.report())
    r = results[0]
    assert r.technique is row[3]
    expected_stage = 1 if i < 5 else 2 if i < 9 else 3
    assert r.stage == expected_stage
    assert r.status is (Status.GROUNDED if expected_stage == 1 else Status.RESCUED)
    s, e = r.matched_span
    assert 0 <= s < e <= len(gc.DOC)


def test_stage_functions_are_isolated():
    rep = gc.report()
    t = gc.triples([("Patient", "sign", "icterus")])[0]
    assert stage1_match(t, rep) is None
    assert stage2_match(t, rep).technique is Technique.SYNONYM
    assert stage3_match(gc.triples([("X", "y", "zzzz")])[0], rep) is None


def test_disabled_stages_leave_hallucinated():
    t = gc.triples([("Patient", "sign", "icterus")])[0]
    res, rep = ground_triples([t], gc.report(), GroundingConfig(stages=(1,)))
    assert res[0].status is Status.HALLUCINATED
    assert rep.hallucination_rate == 1.0


def test_rates_on_ten_triple_fixture():
    _, rep = ground_triples(gc.triples(gc.RATE_ROWS), gc.report())
    assert (rep.grounded, rep.rescued, rep.hallucinated) == (6, 2, 2)
    assert rep.correctness_rate == 0.6
    assert rep.hallucination_rate == 0.2
    assert rep.rescue_rate == 0.5
    assert rep.supported_rate == 0.8
    assert GroundingReport.from_record(rep.to_record()) == rep


def test_summarize_empty():
    rep = summarize("p", [])
    assert rep.triples == 0 and rep.coverage == 0.0 and rep.rescue_rate == 0.0


def test_match_result_invariants():
    with pytest.raises(ValueError):
        MatchResult("t", Status.HALLUCINATED, matched_span=(0, 1))
    with pytest.raises(ValueError):
        MatchResult("t", Status.GROUNDED, stage=2, matched_span=(0, 1))
    r = MatchResult("t", Status.RESCUED, 3, Technique.TYPO_FIX, (0, 4), 83.3)
    assert MatchResult.from_record(r.to_record()) == r


words = st.sampled_from(["jaundice", "fever", "pain", "lesion", "Ki-67", "1240", "U/mL", "absent",
                         "true", "smoking", "coughing", "icterus", "lesoin", "xyz", "chest", "no"])


@settings(max_examples=100, deadline=None)
@given(st.lists(words, min_size=1, max_size=3).map(" ".join), st.sampled_from(["fever", "smoking", "status"]))
def test_more_stages_never_downgrade(value, attribute):
    t = EavTriple("Patient", FhirResourceType.PATIENT, attribute, value, triple_id="t")
    rep = gc.report()
    ranks = [STATUS_RANK[ground_triples([t], rep, GroundingConfig(stages=s))[0][0].status]
             for s in [(1,), (1, 2), (1, 2, 3)]]
    assert ranks == sorted(ranks)


def test_negated_mention_does_not_support_positive_value():
    rep = ClinicalReport.from_text("p", "He denies fever.")
    t = EavTriple("Patient", FhirResourceType.PATIENT, "fever", "present", triple_id="t")
    assert ground_triples([t], rep)[0][0].status is Status.HALLUCINATED
