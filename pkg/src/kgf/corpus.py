"""Loading and sentence segmentation of clinical narrative reports.

Expected layout::

    <root>/<cohort>/<patient_id>.txt     narrative (required, UTF-8)
    <root>/<cohort>/<patient_id>.ann     brat-style expert annotations (optional)
    <root>/<cohort>/<patient_id>.json    prior model output (optional)

Narratives placed directly under ``<root>`` get cohort ``OTHER`` unless the
override map says otherwise.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

logger = logging.getLogger(__name__)


class Cohort(str, enum.Enum):
    PDAC = "PDAC"
    BRCA = "BRCA"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, name: str) -> "Cohort":
        try:
            return cls(name.strip().upper())
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class Sentence:
    index: int
    start: int
    end: int
    text: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Annotation:
    """One span-level expert label. Informational only; never drives the pipeline."""

    label: str
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class ClinicalReport:
    patient_id: str
    cohort: Cohort
    narrative: str
    sentences: tuple[Sentence, ...]
    source_paths: Mapping[str, str] = field(default_factory=dict)
    annotations: tuple[Annotation, ...] = ()

    def sentence_at(self, offset: int) -> Optional[Sentence]:
        for sent in self.sentences:
            if sent.start <= offset < sent.end:
                return sent
        return None

    @classmethod
    def from_text(cls, patient_id: str, narrative: str,
                  cohort: Cohort = Cohort.OTHER, **kwargs) -> "ClinicalReport":
        return cls(patient_id, cohort, narrative, tuple(segment_sentences(narrative)), **kwargs)


@dataclass(frozen=True)
class LoadError:
    path: str
    reason: str


# Tokens that end with a period but do not end a sentence. Extend via
# ``segment_sentences(..., abbreviations=...)``.
DEFAULT_ABBREVIATIONS = frozenset({
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "vs.", "e.g.", "i.e.", "etc.",
    "approx.", "no.", "fig.", "b.i.d.", "t.i.d.", "q.i.d.", "q.d.", "p.o.",
    "h/o.", "hx.", "pt.", "yr.", "yrs.", "wk.", "wks.", "mo.", "sr.", "jr.",
})

_TERMINATOR = re.compile(r"[.!?]+")


def segment_sentences(narrative: str,
                      abbreviations: Iterable[str] = DEFAULT_ABBREVIATIONS) -> list[Sentence]:
    """Split ``narrative`` into sentences with character offsets.

    A terminator run (``.``, ``!``, ``?``) ends a sentence when it is followed
    by whitespace that contains a line break or precedes an uppercase
    letter, or by the end of text. A period closing a known abbreviation never
    ends a sentence.
    """
    abbrevs = {a.lower() for a in abbreviations}
    n = len(narrative)
    cuts: list[int] = []
    for m in _TERMINATOR.finditer(narrative):
        end = m.end()
        if end < n and not narrative[end].isspace():
            continue
        j = end
        saw_newline = False
        while j < n and narrative[j].isspace():
            saw_newline = saw_newline or narrative[j] == "\n"
            j += 1
        if j < n and not (saw_newline or narrative[j].isupper()):
            continue
        if m.group().startswith(".") and _ends_with_abbreviation(narrative, m.start(), abbrevs):
            continue
        cuts.append(end)
    if not cuts or cuts[-1] != n:
        cuts.append(n)

    sentences: list[Sentence] = []
    pos = 0
    for cut in cuts:
        start = pos
        while start < cut and narrative[start].isspace():
            start += 1
        stop = cut
        while stop > start and narrative[stop - 1].isspace():
            stop -= 1
        if stop > start:
            sentences.append(Sentence(len(sentences), start, stop, narrative[start:stop]))
        pos = cut
    return sentences


def _ends_with_abbreviation(text: str, dot_pos: int, abbrevs: set[str]) -> bool:
    start = dot_pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:dot_pos + 1].lower().lstrip("([\"'")
    return word in abbrevs


def parse_annotations(text: str) -> tuple[Annotation, ...]:
    """Parse brat standoff text-bound lines (``T1<TAB>Label 10 15<TAB>text``)."""
    out = []
    for line in text.splitlines():
        parts = line.split("\t")
        if len(parts) < 2 or not parts[0].startswith("T"):
            continue
        head = parts[1].split()
        if len(head) < 3:
            continue
        try:
            # discontinuous spans ("10 15;20 25") keep the outer bounds
            start = int(head[1])
            end = int(head[-1].split(";")[-1])
        except ValueError:
            continue
        out.append(Annotation(head[0], start, end, parts[2] if len(parts) > 2 else ""))
    return tuple(out)


def load_report(path: Path, cohort: Cohort) -> ClinicalReport:
    narrative = path.read_text(encoding="utf-8")
    sources = {"narrative": str(path)}
    annotations: tuple[Annotation, ...] = ()
    ann = path.with_suffix(".ann")
    if ann.is_file():
        sources["annotations"] = str(ann)
        annotations = parse_annotations(ann.read_text(encoding="utf-8"))
    js = path.with_suffix(".json")
    if js.is_file():
        sources["model_output"] = str(js)
    return ClinicalReport(
        patient_id=path.stem,
        cohort=cohort,
        narrative=narrative,
        sentences=tuple(segment_sentences(narrative)),
        source_paths=sources,
        annotations=annotations,
    )


def load_corpus(root_dir: str | Path,
                cohort_map: Optional[Mapping[str, str]] = None,
                *,
                errors: Optional[list[LoadError]] = None) -> list[ClinicalReport]:
    """Load every narrative under ``root_dir``, sorted by patient id.

    ``cohort_map`` maps patient ids to cohort names and wins over the
    directory name. Unreadable files and duplicate ids are recorded in
    ``errors`` (when given) and skipped.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root not found: {root}")
    cohort_map = dict(cohort_map or {})
    errors = errors if errors is not None else []

    reports: dict[str, ClinicalReport] = {}
    for path in sorted(root.rglob("*.txt")):
        rel = path.relative_to(root)
        cohort = Cohort.parse(rel.parts[0]) if len(rel.parts) > 1 else Cohort.OTHER
        if path.stem in cohort_map:
            cohort = Cohort.parse(cohort_map[path.stem])
        if path.stem in reports:
            errors.append(LoadError(str(path), f"duplicate patient id {path.stem!r}"))
            logger.warning("skipping duplicate patient id %s at %s", path.stem, path)
            continue
        try:
            reports[path.stem] = load_report(path, cohort)
        except (OSError, UnicodeDecodeError) as exc:
            errors.append(LoadError(str(path), str(exc)))
            logger.warning("could not read %s: %s", path, exc)
    if not reports:
        logger.warning("no narratives found under %s", root)
    return [reports[k] for k in sorted(reports)]
