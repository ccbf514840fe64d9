"""Deterministic rule-based agent for offline runs.

It reads the ``TASK:`` line of a rendered prompt and answers with pattern
heuristics over the embedded document. Output depends only on the prompt and
the agent's ``provider_id``, so runs are reproducible without network access.
Token probabilities are synthesized from hashes: values copied from the text
get confident distributions, guessed values get flat ones.
"""

from __future__ import annotations

import hashlib
import logging
import re
from typing import Callable, Optional

from kgf.agents.base import AgentRequest, AgentResponse, AgentRole, RequestError

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"^(?:a|an|the|her|his|their|of|with|for|on|in|to|and)\s+", re.I)
_SENTENCE = re.compile(r"[^.!?\n]+[.!?]?")

_NUMERIC = re.compile(
    r"(?P<attr>[A-Za-z][A-Za-z0-9\-]*(?: [A-Za-z0-9][A-Za-z0-9\-]*){0,3}?)"
    r"\s+(?:was|of|is|at|measured)\s+"
    r"(?P<val>\d+(?:\.\d+)?(?:\s?(?:%|[A-Za-z]+(?:/[A-Za-z]+)?))?)")
_NEGATED = re.compile(r"\b(?:denies|denied|no|negative for)\s+(?P<term>[a-z][a-z\- ]{2,30}?)(?=[.,;]| or | and |$)",
                      re.I)
_MEDICATION = re.compile(
    r"\b(?i:started|starts|initiated|received|receiving|began|begun on|continued|prescribed)\s+"
    r"(?i:on\s+)?(?P<drug>[A-Z][A-Za-z0-9\-]+(?:\s[A-Z][A-Za-z0-9\-]+)?)")
_DIAGNOSIS = re.compile(r"\bdiagnosed with\s+(?P<dx>[A-Za-z0-9\- ]+?)(?=[.,;]|$)", re.I)
_STATUS = re.compile(r"\b(?P<marker>HER2|ER|PR|BRCA1|BRCA2|KRAS)\s+(?:status\s+)?(?:was\s+|is\s+)?"
                     r"(?P<val>positive|negative|overexpressed|mutated|wild[- ]type)\b")
_VERB = (r"confirms|confirmed|verifies|verified|shows|showed|revealed|reveals|visualizes|visualized|"
         r"demonstrated|demonstrates|determines|determined|treats|treated|indicates|indicated|"
         r"suggests|suggested|supports|supported|guides|guided|established|establishes")
_RELATION = re.compile(rf"(?P<h>[A-Za-z][A-Za-z0-9\- ]{{1,40}}?)\s+(?P<v>{_VERB})\s+(?P<t>[A-Za-z0-9][A-Za-z0-9\- ]{{1,40}}?)"
                       r"(?=[.,;]|$| in | for | with | and )")

_STOP = frozenset("a an the of and or to in on at for with by from is are was were be it this that".split())


def _digest(*parts: str) -> int:
    return int.from_bytes(hashlib.blake2b("\x1f".join(parts).encode(), digest_size=8).digest(), "big")


def _section(prompt: str, start: str, end: str) -> str:
    m = re.search(re.escape(start) + r"\n(.*?)\n" + re.escape(end), prompt, re.S)
    return m.group(1) if m else ""


def _field(prompt: str, name: str) -> str:
    m = re.search(rf"^{re.escape(name)}:\s*(.*)$", prompt, re.M)
    return m.group(1).strip() if m else ""


def _clean(phrase: str) -> str:
    phrase = phrase.strip(" ,;:")
    while True:
        new = _ARTICLES.sub("", phrase)
        if new == phrase:
            return phrase
        phrase = new


def _tokens(text: str) -> set[str]:
    return {w for w in re.findall(r"\w+", text.casefold()) if w not in _STOP}


def _support(text: str, doc: str) -> float:
    """Best token F1 between ``text`` and any sentence of ``doc``."""
    best = 0.0
    a = _tokens(text)
    for sent in _SENTENCE.findall(doc):
        b = _tokens(sent)
        common = len(a & b)
        if common:
            p, r = common / len(a), common / len(b)
            best = max(best, 2 * p * r / (p + r))
    return best


class HeuristicAgent:
    """Offline stand-in for every agent role."""

    def __init__(self, provider_id: str = "offline", *, hallucinate: bool = True):
        self.provider_id = provider_id
        self.hallucinate = hallucinate
        self._handlers: dict[str, Callable[[str, AgentRequest], str]] = {
            "extract_eav": self._extract,
            "generate_relations": self._generate,
            "refine_relations": self._refine,
            "validate_relations": self._validate,
            "judge": self._judge,
            "perturb": self._perturb,
        }

    def complete(self, request: AgentRequest) -> AgentResponse:
        m = re.match(r"TASK:\s*(\w+)", request.prompt)
        if not m or m.group(1) not in self._handlers:
            raise RequestError("offline agent cannot handle a prompt without a known TASK marker")
        text = self._handlers[m.group(1)](request.prompt, request)
        return AgentResponse(text=text, provider_id=self.provider_id)

    # -- extraction ---------------------------------------------------------

    def _probs(self, value: str, confident: bool) -> str:
        n = max(1, len(value.split()))
        h = _digest(self.provider_id, value)
        if confident:
            ps = [0.90 + ((h >> (8 * i)) % 10) / 100 for i in range(n)]
        else:
            ps = [0.30 + ((h >> (8 * i)) % 15) / 100 for i in range(n)]
        return ",".join(f"{p:.2f}" for p in ps)

    def _record(self, entity: str, attribute: str, value: str, confident: bool = True,
                fhir_type: str = "") -> str:
        parts = ["EAV", f"entity={entity}"]
        if fhir_type:
            parts.append(f"type={fhir_type}")
        parts += [f"attribute={attribute}", f"value={value}", f"probs={self._probs(value, confident)}"]
        return "\t".join(parts)

    def _extract(self, prompt: str, request: AgentRequest) -> str:
        doc = _section(prompt, "DOCUMENT:", "END DOCUMENT")
        rows: list[str] = []
        seen: set[tuple[str, str, str]] = set()

        def add(entity, attribute, value, confident=True, fhir_type=""):
            key = (entity.casefold(), attribute.casefold(), value.casefold())
            if key not in seen:
                seen.add(key)
                rows.append(self._record(entity, attribute, value, confident, fhir_type))

        for sent in _SENTENCE.findall(doc):
            for m in _NUMERIC.finditer(sent):
                attr = _clean(m.group("attr"))
                if attr and not attr[0].isdigit() and attr.casefold() not in _STOP:
                    add(attr, re.sub(r"\W+", "_", attr).strip("_").lower(), m.group("val").strip(),
                        fhir_type="Observation")
            for m in _NEGATED.finditer(sent):
                term = _clean(m.group("term"))
                if term:
                    add("Patient", term.replace(" ", "_").lower(), "absent", fhir_type="Patient")
            for m in _MEDICATION.finditer(sent):
                add(m.group("drug"), "medication", m.group("drug"), fhir_type="MedicationStatement")
            for m in _DIAGNOSIS.finditer(sent):
                dx = _clean(m.group("dx"))
                add(dx, "diagnosis", dx, fhir_type="Condition")
            for m in _STATUS.finditer(sent):
                add(f"{m.group('marker')} Status", "status", m.group("val"), fhir_type="Observation")
        if self.hallucinate and _digest(doc) % 2 == 0:
            # a plausible but unsupported record, exercising the hallucination path
            add("Patient", "family_history", "pancreatic cancer in sibling", confident=False,
                fhir_type="Patient")
        return "\n".join(rows)

    # -- relations ----------------------------------------------------------

    def _relations(self, doc: str) -> list[tuple[str, str, str]]:
        out = []
        for sent in _SENTENCE.findall(doc):
            for m in _RELATION.finditer(sent.strip()):
                h, t = _clean(m.group("h")), _clean(m.group("t"))
                h = re.sub(r"^(?:Patient|She|He)\s+(?:had|has|underwent)\s+", "", h, flags=re.I)
                if h and t and h.casefold() != t.casefold():
                    out.append((h, m.group("v"), t))
        return out

    def _generate(self, prompt: str, request: AgentRequest) -> str:
        doc = _section(prompt, "DOCUMENT:", "END DOCUMENT")
        variant = int(_field(prompt, "VARIANT") or 0)
        rows = []
        for h, v, t in self._relations(doc):
            # each prompt variant misses a different share of the relations
            if variant and _digest(h, v, t, str(variant)) % 4 == 0:
                continue
            rows.append(f"{h} | {v} | {t}")
        if self.hallucinate and not variant:
            # unsupported relation that the other roles should not confirm
            rows.append("Tumor | indicates | distant metastasis")
        return "\n".join(rows)

    def _candidates(self, prompt: str) -> list[tuple[str, str, str]]:
        out = []
        for line in _section(prompt, "CANDIDATES:", "END CANDIDATES").splitlines():
            parts = [p.strip() for p in line.split("|")]
            if len(parts) == 3 and all(parts):
                out.append(tuple(parts))
        return out

    def _refine(self, prompt: str, request: AgentRequest) -> str:
        doc = _section(prompt, "DOCUMENT:", "END DOCUMENT")
        rows = [f"{h} | {p} | {t}" for h, p, t in self._candidates(prompt)
                if _support(f"{h} {p} {t}", doc) >= 0.3]
        return "\n".join(rows)

    def _validate(self, prompt: str, request: AgentRequest) -> str:
        doc = _section(prompt, "DOCUMENT:", "END DOCUMENT").casefold()
        rows = [f"{h} | {p} | {t}" for h, p, t in self._candidates(prompt)
                if h.casefold() in doc and t.casefold() in doc]
        return "\n".join(rows)

    def _judge(self, prompt: str, request: AgentRequest) -> str:
        triple = _field(prompt, "RELATION").replace("|", " ")
        context = _section(prompt, "CONTEXT:", "END CONTEXT")
        support = _support(triple, context)
        jitter = (_digest(self.provider_id, triple) % 7) / 100
        return f"{min(1.0, 0.45 + 0.5 * support + jitter):.2f}"

    def _perturb(self, prompt: str, request: AgentRequest) -> str:
        k = int(re.search(r"Produce (\d+)", prompt).group(1))
        parts = [p.strip() for p in _field(prompt, "RELATION").split("|")]
        if len(parts) != 3:
            return ""
        h, p, t = parts
        context = _section(prompt, "CONTEXT:", "END CONTEXT")
        supported = _support(f"{h} {p} {t}", context) >= 0.4
        edits = [
            (t, p, h),
            (h, f"does not {p}", t),
            (h, p, f"no {t}"),
            (h, "contradicts", t),
            (f"absent {h}", p, t),
            (h, f"rarely {p}", t),
            (t, f"not {p}", h),
        ]
        rows = []
        for i in range(k):
            eh, ep, et = edits[i % len(edits)]
            if supported:
                verdict = "UNCLEAR" if i == 0 and _digest(h, p, t) % 3 == 0 else "CONSISTENT"
            else:
                verdict = "CONTRADICTORY" if i % 3 != 2 else "UNCLEAR"
            rows.append(f"{eh} | {ep} | {et}\t{verdict}")
        return "\n".join(rows)


def offline_agents(prefix: str = "offline", hallucinate: bool = True) -> dict:
    """One heuristic agent per role, with distinct provider ids."""
    return {role: HeuristicAgent(f"{prefix}-{role.value.lower()}", hallucinate=hallucinate)
            for role in AgentRole}
