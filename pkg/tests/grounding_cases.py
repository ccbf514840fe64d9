"""Authored grounding fixtures shared by the module and acceptance tests."""

from __future__ import annotations

from kgf.corpus import ClinicalReport
from kgf.extraction import EavTriple, FhirResourceType
from kgf.grounding.matching import Technique

DOC = ("Patient presented with jaundice. CA 19-9 was 1240 U/mL. Started FOLFIRINOX in March. "
       "Ki-67 index of 25 %. Severe pain in the upper abdomen. Patient reports vomiting. "
       "She denies any history of smoking. He coughs at night. No chest pain reported. "
       "CT showed a pancreatic lesion.")

# (entity, attribute, value, technique expected to fire)
TECHNIQUE_ROWS = [
    ("Patient", "jaundice", "jaundice", Technique.EXACT),
    ("CA 19-9", "ca_19_9", "1240U/mL", Technique.REGEX),
    ("FOLFRINOX", "medication", "FOLFRINOX", Technique.FUZZY),
    ("Pain", "location", "pain in upper abdomen", Technique.NGRAM),
    ("Patient", "vomiting", "true", Technique.BOOLEAN_INFERENCE),
    ("Ki-67", "marker", "ki-67", Technique.CASE_INSENSITIVE),
    ("Patient", "history_of_smoking", "false", Technique.NEGATION_PATTERN),
    ("Patient", "symptom", "coughing", Technique.LEMMA),
    ("Patient", "sign", "icterus", Technique.SYNONYM),
    ("Chest pain", "status", "absent", Technique.SENTENCE_NEGATION),
    ("CT", "finding", "lesoin", Technique.TYPO_FIX),
    ("Social history", "smking", "false", Technique.EXPLICIT_FIX),
]

# 6 grounded, 2 rescued, 2 hallucinated:
# CR = 6/10, HR = 2/10, RR = 2/(2+2)
RATE_ROWS = [
    ("Patient", "jaundice", "jaundice"),
    ("CA 19-9", "ca_19_9", "1240U/mL"),
    ("FOLFRINOX", "medication", "FOLFRINOX"),
    ("Pain", "location", "pain in upper abdomen"),
    ("Patient", "vomiting", "true"),
    ("Ki-67", "index", "25 %"),
    ("Patient", "sign", "icterus"),
    ("CT", "finding", "lesoin"),
    ("Patient", "family_history", "pancreatic cancer in sibling"),
    ("Patient", "allergy", "penicillin"),
]


def report(pid: str = "G") -> ClinicalReport:
    return ClinicalReport.from_text(pid, DOC)


def triples(rows, pid: str = "G") -> list[EavTriple]:
    return [EavTriple(r[0], FhirResourceType.OBSERVATION, r[1], r[2], patient_id=pid, triple_id=f"{pid}:{i}")
            for i, r in enumerate(rows)]
