from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from kgf.agents.embedding import HashingEmbedder, cosine
from kgf.extraction import EavTriple, FhirResourceType
from kgf.grounding.fuzzy import fuzzy_ratio
from kgf.ontology import (
    ConceptMapper,
    DeclKind,
    OntologyError,
    OntologyTerm,
    RestrictionAxiom,
    SchemaCycleError,
    SchemaDecl,
    Vocabulary,
    build_schema,
    find_subclass_cycle,
    load_tbox,
    load_vocab,
    load_vocab_dir,
    map_concept,
    mint_uri,
    parse_tbox,
    unmapped_rate,
)
from kgf.relations import RelationTriple

from conftest import REPO, VOCAB_DIR

WEIGHT_LOSS = OntologyTerm(Vocabulary.SNOMED, "267036007", "Weight Loss", ("weight decrease", "losing weight"))
FOLFIRINOX = OntologyTerm(Vocabulary.RXNORM, "1372738", "FOLFIRINOX")
CA199 = OntologyTerm(Vocabulary.LOINC, "24108-3", "Cancer Ag 19-9", ("CA 19-9",))
TERMS = [WEIGHT_LOSS, FOLFIRINOX, CA199]


def test_snomed_uri_exact():
    assert WEIGHT_LOSS.uri == "http://snomed.info/id/267036007"
    assert mint_uri(Vocabulary.GO, "GO:0006915") == "http://purl.obolibrary.org/obo/GO_0006915"


@given(st.text(min_size=1, max_size=10), st.text(min_size=1, max_size=10))
def test_minting_is_injective(a, b):
    for vocab in Vocabulary:
        if vocab is Vocabulary.GO:
            continue
        assert (mint_uri(vocab, a) == mint_uri(vocab, b)) == (a == b)


def test_load_vocab_row_and_duplicates(tmp_path):
    f = tmp_path / "v.tsv"
    f.write_text("# header\nSNOMED\t267036007\tWeight Loss\tweight decrease|losing weight\n"
                 "SNOMED\t1\tOld\nSNOMED\t1\tNew\nBOGUS\t2\tX\nbad line\n", encoding="utf-8")
    diags = []
    terms = load_vocab(f, diagnostics=diags)
    by_code = {t.code: t for t in terms}
    assert by_code["267036007"].synonyms == ("weight decrease", "losing weight")
    assert by_code["1"].label == "New"
    assert len(diags) == 2
    with pytest.raises(FileNotFoundError):
        load_vocab(tmp_path / "missing.tsv")


def test_packaged_vocab_loads():
    terms = load_vocab_dir(VOCAB_DIR)
    assert {t.vocabulary for t in terms} == set(Vocabulary)
    assert any(t.uri == "http://snomed.info/id/267036007" for t in terms)


def test_exact_label_alpha_one_scores_one():
    m = map_concept("Weight Loss", TERMS, alpha=1.0)
    assert m.term is WEIGHT_LOSS and m.score == 1.0 and m.sim_lex == 1.0


def test_folfirinox_maps_to_rxnorm():
    m = map_concept("FOLFIRINOX", load_vocab_dir(VOCAB_DIR))
    assert m.term.vocabulary is Vocabulary.RXNORM


def test_synonym_counts_lexically():
    m = map_concept("losing weight", TERMS)
    assert m.term is WEIGHT_LOSS and m.sim_lex == 1.0


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_score_is_affine_in_alpha(alpha):
    emb = HashingEmbedder()
    raw = "weight decrease noted"
    lex = max(fuzzy_ratio(raw.casefold(), n.casefold()) for n in WEIGHT_LOSS.names) / 100
    sem = min(1.0, max(0.0, cosine(emb.embed(raw), emb.embed(WEIGHT_LOSS.label))))
    got = ConceptMapper(TERMS, alpha, emb).score(raw, WEIGHT_LOSS).score
    assert abs(got - (alpha * lex + (1 - alpha) * sem)) <= 1e-12


def test_floor_and_unmapped_rate():
    mapper = ConceptMapper(TERMS, floor=0.99)
    assert mapper.map("Weight Loss") is not None
    assert mapper.map("zzzzqqq") is None
    assert mapper.unmapped_rate == 0.5
    assert unmapped_rate(0, 0) == 0.0


def test_empty_vocab_and_bad_alpha():
    with pytest.raises(OntologyError):
        map_concept("x", [])
    with pytest.raises(ValueError):
        ConceptMapper(TERMS, alpha=1.5)


def test_tie_break_by_vocab_priority_then_code():
    a = OntologyTerm(Vocabulary.LOINC, "2", "Fever")
    b = OntologyTerm(Vocabulary.SNOMED, "9", "Fever")
    c = OntologyTerm(Vocabulary.SNOMED, "1", "Fever")
    assert map_concept("Fever", [a, b, c]).term is c


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False), st.sampled_from(["fever", "weight", "CA 19-9", "folfox", "loss"]))
def test_mapping_independent_of_vocab_order(rnd, raw):
    terms = load_vocab_dir(VOCAB_DIR)
    shuffled = list(terms)
    rnd.shuffle(shuffled)
    assert map_concept(raw, terms, floor=0.0).term == map_concept(raw, shuffled, floor=0.0).term


# -- schema ----------------------------------------------------------------------

def _eav(entity, ftype, attr, value="v"):
    return EavTriple(entity, ftype, attr, value)


def test_build_schema_classes_properties_and_domain_range():
    eavs = [_eav("HER2 Status", FhirResourceType.OBSERVATION, "status"),
            _eav("Trastuzumab", FhirResourceType.MEDICATION_STATEMENT, "medication")]
    rels = [RelationTriple("HER2 Status", "determines", "Trastuzumab"),
            RelationTriple("HER2 Status", "determines", "Trastuzumab", source="b"),
            RelationTriple("Trastuzumab", "determines", "status")]
    mapping = ConceptMapper(TERMS, 1.0).map("Weight Loss")
    decls = build_schema([mapping, None], eavs, rels)
    assert SchemaDecl(DeclKind.CLASS, WEIGHT_LOSS.uri) in decls
    dr = [d for d in decls if d.kind is DeclKind.DOMAIN_RANGE]
    assert dr == [SchemaDecl(DeclKind.DOMAIN_RANGE, "http://example.org/kg#determines",
                             domain="http://hl7.org/fhir/Observation",
                             range="http://hl7.org/fhir/MedicationStatement")]
    assert decls == sorted(decls)


def test_loinc_and_rxnorm_are_not_classes():
    mapping = ConceptMapper(TERMS, 1.0).map("FOLFIRINOX")
    assert not any(d.kind is DeclKind.CLASS for d in build_schema([mapping]))


def test_tbox_domain_range_wins():
    tbox = parse_tbox("@prefix kg: <http://example.org/kg#>\nDomainRange kg:treats kg:A kg:B\n")
    decls = build_schema([], [], [RelationTriple("x", "treats", "y")], tbox,
                         endpoint_types={"x": "http://example.org/kg#X", "y": "http://example.org/kg#Y"})
    dr = [d for d in decls if d.kind is DeclKind.DOMAIN_RANGE]
    assert [(d.domain, d.range) for d in dr] == [("http://example.org/kg#A", "http://example.org/kg#B")]


def test_parse_tbox_all_axioms():
    text = ("@prefix kg: <http://example.org/kg#>\n# comment\n"
            "Class kg:A\nObjectProperty kg:p\nSubClassOf kg:A kg:B\nEquivalentClass kg:C kg:D\n"
            "Restriction kg:Biopsy kg:hasOutcome kg:Malignant kg:PositiveFinding\n")
    tbox = parse_tbox(text)
    kinds = sorted(d.kind.value for d in tbox.decls)
    assert kinds == ["ClassDecl", "EquivalentClass", "ObjectProperty", "SubClassOf"]
    kg = "http://example.org/kg#"
    assert tbox.restrictions == [RestrictionAxiom(kg + "Biopsy", kg + "hasOutcome", kg + "Malignant",
                                                  kg + "PositiveFinding")]
    with pytest.raises(OntologyError, match="line 1"):
        parse_tbox("SubClassOf kg:A")


def test_packaged_tbox_loads():
    tbox = load_tbox(REPO / "src" / "kgf" / "data" / "tbox.txt")
    assert any(d.kind is DeclKind.SUBCLASS_OF and d.subject.endswith("ElevatedCA19_9") for d in tbox.decls)


def test_cycle_rejected():
    decls = [SchemaDecl(DeclKind.SUBCLASS_OF, "urn:a", "urn:b"), SchemaDecl(DeclKind.SUBCLASS_OF, "urn:b", "urn:a")]
    assert find_subclass_cycle(decls) is not None
    tbox = parse_tbox("SubClassOf <urn:a> <urn:b>\nSubClassOf <urn:b> <urn:a>\n")
    with pytest.raises(SchemaCycleError):
        build_schema([], tbox=tbox)


def test_to_line_compacts():
    d = SchemaDecl(DeclKind.SUBCLASS_OF, "http://example.org/kg#A", "http://example.org/kg#B")
    assert d.to_line({"kg": "http://example.org/kg#"}) == "SubClassOf kg:A kg:B"


def test_random_acyclic_chains_accepted():
    rnd = random.Random(3)
    names = [f"urn:c{i}" for i in range(20)]
    rnd.shuffle(names)
    decls = [SchemaDecl(DeclKind.SUBCLASS_OF, a, b) for a, b in zip(names, names[1:])]
    assert find_subclass_cycle(decls) is None
