"""Stage 1: FHIR-typed entity-attribute-value extraction with value entropy."""

from __future__ import annotations

import enum
import logging
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, NamedTuple, Optional, Sequence

from kgf.agents.base import AgentRequest, AgentResponse, AgentRole, CompletionProvider, complete
from kgf.agents.prompts import render_prompt
from kgf.corpus import ClinicalReport
from kgf.errors import KgfError

logger = logging.getLogger(__name__)

DEFAULT_DELTA_H = 0.8


class FhirResourceType(str, enum.Enum):
    PATIENT = "Patient"
    CONDITION = "Condition"
    OBSERVATION = "Observation"
    PROCEDURE = "Procedure"
    MEDICATION_STATEMENT = "MedicationStatement"
    IMAGING_STUDY = "ImagingStudy"
    DIAGNOSTIC_REPORT = "DiagnosticReport"
    CARE_PLAN = "CarePlan"
    PRACTITIONER = "Practitioner"
    SPECIMEN = "Specimen"
    UNKNOWN = "Unknown"

    @classmethod
    def from_name(cls, name: str) -> Optional["FhirResourceType"]:
        key = name.strip().casefold()
        for member in cls:
            if member.value.casefold() == key:
                return member
        return None


class ExtractionError(KgfError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class EntropyDomainError(KgfError, ValueError):
    pass


@dataclass(frozen=True)
class EavTriple:
    entity: str
    fhir_type: FhirResourceType
    attribute: str
    value: str
    patient_id: str = ""
    span: Optional[tuple[int, int]] = None
    extractor_id: str = ""
    value_token_probs: Optional[tuple[float, ...]] = None
    entropy: Optional[float] = None
    triple_id: str = ""

    def __post_init__(self):
        for name in ("entity", "attribute", "value"):
            if not getattr(self, name).strip():
                raise ValueError(f"EavTriple.{name} must be non-empty")
        if (self.entropy is None) != (self.value_token_probs is None):
            raise ValueError("entropy must be present exactly when token probabilities are")
        if self.entropy is not None and self.entropy < 0:
            raise ValueError("entropy must be non-negative")

    def to_record(self) -> dict:
        return {
            "id": self.triple_id,
            "entity": self.entity,
            "fhir_type": self.fhir_type.value,
            "attribute": self.attribute,
            "value": self.value,
            "entropy": self.entropy,
            "probs": list(self.value_token_probs) if self.value_token_probs is not None else None,
            "span": list(self.span) if self.span else None,
            "patient_id": self.patient_id,
            "extractor_id": self.extractor_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EavTriple":
        probs = rec.get("probs")
        return cls(
            entity=rec["entity"],
            fhir_type=FhirResourceType(rec["fhir_type"]),
            attribute=rec["attribute"],
            value=rec["value"],
            patient_id=rec.get("patient_id", ""),
            span=tuple(rec["span"]) if rec.get("span") else None,
            extractor_id=rec.get("extractor_id", ""),
            value_token_probs=tuple(probs) if probs is not None else None,
            entropy=rec.get("entropy"),
            triple_id=rec.get("id", ""),
        )


@dataclass
class ExtractionResult:
    triples: list[EavTriple] = field(default_factory=list)
    skipped: int = 0
    raw_text: str = ""


# -- typing -----------------------------------------------------------------

def _norm(text: str) -> str:
    return " ".join(re.sub(r"[_\-]+", " ", text).casefold().split())


@lru_cache(maxsize=1)
def _alias_table() -> dict[str, FhirResourceType]:
    table: dict[str, FhirResourceType] = {}
    raw = resources.files("kgf.data").joinpath("fhir_aliases.tsv").read_text(encoding="utf-8")
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        alias, type_name = line.split("\t")
        table[_norm(alias)] = FhirResourceType(type_name)
    for member in FhirResourceType:
        if member is not FhirResourceType.UNKNOWN:
            table[_norm(member.value)] = member
            # camel-case names written with spaces ("care plan")
            table[_norm(re.sub(r"(?<!^)(?=[A-Z])", " ", member.value))] = member
    return table


def assign_fhir_type(entity: str) -> FhirResourceType:
    """Map a free-text entity name to a FHIR resource type.

    Exact alias hits win; otherwise the longest alias occurring in the entity
    as a whole-word phrase decides. No hit gives ``Unknown``.
    """
    key = _norm(entity)
    if not key:
        return FhirResourceType.UNKNOWN
    table = _alias_table()
    if key in table:
        return table[key]
    padded = f" {key} "
    best: Optional[str] = None
    for alias in table:
        if f" {alias} " in padded and (best is None or len(alias) > len(best)):
            best = alias
    return table[best] if best else FhirResourceType.UNKNOWN


# -- entropy ----------------------------------------------------------------

def value_entropy(probs: Sequence[float], *, mean: bool = False) -> float:
    """Natural-log entropy ``-sum p log p`` over a value's token probabilities.

    With ``mean=True`` the sum is divided by the token count, so long values
    are not penalized for their length.
    """
    if len(probs) == 0:
        raise EntropyDomainError("entropy of an empty probability list is undefined")
    total = 0.0
    for p in probs:
        p = float(p)
        if not 0.0 < p <= 1.0:
            raise EntropyDomainError(f"probability {p} outside (0, 1]")
        if p < 1.0:
            total -= p * math.log(p)
    return total / len(probs) if mean else total


class Partition(NamedTuple):
    confident: list[EavTriple]
    flagged: list[EavTriple]
    unknown: list[EavTriple]


def flag_uncertain(triples: Iterable[EavTriple], delta_h: float = DEFAULT_DELTA_H) -> Partition:
    if delta_h < 0:
        raise ValueError("delta_h must be >= 0")
    part = Partition([], [], [])
    for t in triples:
        if t.entropy is None:
            part.unknown.append(t)
        elif t.entropy > delta_h:
            part.flagged.append(t)
        else:
            part.confident.append(t)
    return part


# -- response parsing ---------------------------------------------------------

_REQUIRED = ("entity", "attribute", "value")


def _token_probs_for(span: tuple[int, int], response: AgentResponse) -> Optional[tuple[float, ...]]:
    """Probabilities of the response tokens overlapping the character span."""
    if not response.token_probs:
        return None
    if "".join(tok for tok, _ in response.token_probs) != response.text:
        return None
    start, end = span
    out = []
    pos = 0
    for tok, p in response.token_probs:
        tok_end = pos + len(tok)
        if tok_end > start and pos < end and tok.strip():
            out.append(p)
        pos = tok_end
    return tuple(out) or None


def parse_eav_response(response: AgentResponse, patient_id: str = "", *,
                       mean_entropy: bool = False) -> ExtractionResult:
    """Parse tab-separated ``EAV`` records out of an extractor completion."""
    text = response.text
    result = ExtractionResult(raw_text=text)
    if not text.strip():
        return result

    offset = 0
    for line in text.splitlines(keepends=True):
        line_start = offset
        offset += len(line)
        body = line.rstrip("\r\n")
        if not body.strip():
            continue
        if not (body.startswith("EAV") or "entity=" in body):
            continue
        fields: dict[str, tuple[str, int]] = {}
        col = 0
        for part in body.split("\t"):
            if "=" in part:
                key, _, val = part.partition("=")
                val_col = col + len(key) + 1
                stripped = val.strip()
                lead = len(val) - len(val.lstrip())
                fields[key.strip().lower()] = (stripped, line_start + val_col + lead)
            col += len(part) + 1
        if any(not fields.get(k, ("", 0))[0] for k in _REQUIRED):
            result.skipped += 1
            continue

        entity = fields["entity"][0]
        fhir_type = None
        if "type" in fields:
            fhir_type = FhirResourceType.from_name(fields["type"][0])
        if fhir_type is None:
            fhir_type = assign_fhir_type(entity)

        span = None
        if "span" in fields:
            m = re.fullmatch(r"(\d+)\s*[:\-,]\s*(\d+)", fields["span"][0])
            if m and int(m.group(1)) < int(m.group(2)):
                span = (int(m.group(1)), int(m.group(2)))

        probs: Optional[tuple[float, ...]] = None
        if "probs" in fields:
            try:
                probs = tuple(float(x) for x in fields["probs"][0].split(",") if x.strip())
            except ValueError:
                probs = None
        if probs is None:
            value, value_pos = fields["value"]
            probs = _token_probs_for((value_pos, value_pos + len(value)), response)
        entropy = None
        if probs:
            try:
                entropy = value_entropy(probs, mean=mean_entropy)
            except EntropyDomainError:
                probs = None
        else:
            probs = None

        result.triples.append(EavTriple(
            entity=entity,
            fhir_type=fhir_type,
            attribute=fields["attribute"][0],
            value=fields["value"][0],
            patient_id=patient_id,
            span=span,
            extractor_id=response.provider_id,
            value_token_probs=probs,
            entropy=entropy,
            triple_id=f"{patient_id}:{len(result.triples)}",
        ))

    if not result.triples:
        raise ExtractionError("no EAV records found in extractor response", text)
    return result


def extract_eav(report: ClinicalReport, extractor: CompletionProvider, *,
                mean_entropy: bool = False, retries: int = 3) -> ExtractionResult:
    prompt = render_prompt("extract_eav", {
        "doc": report.narrative,
        "fhir_types": ", ".join(t.value for t in FhirResourceType if t is not FhirResourceType.UNKNOWN),
    })
    request = AgentRequest(role=AgentRole.EXTRACTOR, prompt=prompt, want_token_probs=True)
    response = complete(request, extractor, retries=retries)
    result = parse_eav_response(response, report.patient_id, mean_entropy=mean_entropy)
    if result.skipped:
        logger.info("%s: skipped %d malformed EAV records", report.patient_id, result.skipped)
    return result


def with_entropy(triple: EavTriple, probs: Optional[Sequence[float]], *, mean: bool = False) -> EavTriple:
    if probs is None:
        return replace(triple, value_token_probs=None, entropy=None)
    return replace(triple, value_token_probs=tuple(probs), entropy=value_entropy(probs, mean=mean))
