"""Stage 2: vocabulary mapping and schema (TBox) construction."""

from __future__ import annotations

import enum
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from kgf import iri as ns
from kgf.agents.embedding import EmbeddingProvider, HashingEmbedder, cosine
from kgf.errors import KgfError
from kgf.grounding.fuzzy import fuzzy_ratio

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.6
DEFAULT_FLOOR = 0.55


class Vocabulary(str, enum.Enum):
    SNOMED = "SNOMED"
    LOINC = "LOINC"
    RXNORM = "RXNORM"
    ICD = "ICD"
    GO = "GO"


# tie-break order for equal mapping scores
VOCAB_PRIORITY = {v: i for i, v in enumerate(Vocabulary)}

URI_BASES = {
    Vocabulary.SNOMED: "http://snomed.info/id/",
    Vocabulary.LOINC: "https://loinc.org/",
    Vocabulary.RXNORM: "http://purl.bioontology.org/ontology/RXNORM/",
    Vocabulary.ICD: "http://purl.bioontology.org/ontology/ICD10CM/",
    Vocabulary.GO: "http://purl.obolibrary.org/obo/GO_",
}

# vocabularies whose concepts become OWL classes
CLASS_VOCABS = frozenset({Vocabulary.SNOMED, Vocabulary.GO, Vocabulary.ICD})


class OntologyError(KgfError):
    pass


class SchemaCycleError(OntologyError):
    def __init__(self, cycle: Sequence[str]):
        super().__init__("SubClassOf cycle: " + " -> ".join(cycle))
        self.cycle = list(cycle)


def mint_uri(vocabulary: Vocabulary, code: str,
             bases: Optional[Mapping[Vocabulary, str]] = None) -> str:
    base = (bases or URI_BASES)[vocabulary]
    if vocabulary is Vocabulary.GO and code.upper().startswith("GO:"):
        code = code[3:]
    return base + ns.encode_local(code)


@dataclass(frozen=True)
class OntologyTerm:
    vocabulary: Vocabulary
    code: str
    label: str
    synonyms: tuple[str, ...] = ()
    uri: str = ""

    def __post_init__(self):
        if not self.uri:
            object.__setattr__(self, "uri", mint_uri(self.vocabulary, self.code))

    @property
    def names(self) -> tuple[str, ...]:
        return (self.label,) + self.synonyms


@dataclass(frozen=True)
class ConceptMapping:
    raw_term: str
    term: OntologyTerm
    sim_lex: float
    sim_sem: float
    score: float
    alpha: float = DEFAULT_ALPHA

    def to_record(self) -> dict:
        return {
            "raw": self.raw_term,
            "vocab": self.term.vocabulary.value,
            "code": self.term.code,
            "label": self.term.label,
            "uri": self.term.uri,
            "sim_lex": round(self.sim_lex, 6),
            "sim_sem": round(self.sim_sem, 6),
            "score": round(self.score, 6),
        }


def load_vocab(path: str | Path, *, diagnostics: Optional[list[str]] = None,
               bases: Optional[Mapping[Vocabulary, str]] = None) -> list[OntologyTerm]:
    """Read a ``vocabulary<TAB>code<TAB>label[<TAB>syn|syn...]`` snapshot."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"vocabulary file not found: {path}")
    diagnostics = diagnostics if diagnostics is not None else []
    terms: dict[tuple[Vocabulary, str], OntologyTerm] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) not in (3, 4) or not cols[1].strip() or not cols[2].strip():
            diagnostics.append(f"{path}:{lineno}: expected 3 or 4 tab-separated columns")
            continue
        try:
            vocab = Vocabulary(cols[0].strip().upper())
        except ValueError:
            diagnostics.append(f"{path}:{lineno}: unknown vocabulary {cols[0]!r}")
            continue
        code = cols[1].strip()
        synonyms = tuple(s.strip() for s in cols[3].split("|") if s.strip()) if len(cols) == 4 else ()
        key = (vocab, code)
        if key in terms:
            logger.warning("%s:%d: duplicate %s code %s, keeping the later row", path, lineno, vocab.value, code)
        terms[key] = OntologyTerm(vocab, code, cols[2].strip(), synonyms, mint_uri(vocab, code, bases))
    for d in diagnostics:
        logger.warning(d)
    return list(terms.values())


def load_vocab_dir(directory: str | Path, **kwargs) -> list[OntologyTerm]:
    out: list[OntologyTerm] = []
    for path in sorted(Path(directory).glob("*.tsv")):
        out.extend(load_vocab(path, **kwargs))
    return out


def lexical_similarity(a: str, b: OntologyTerm | str) -> float:
    names = b.names if isinstance(b, OntologyTerm) else (b,)
    fa = a.casefold()
    return max(fuzzy_ratio(fa, name.casefold()) for name in names) / 100.0


class ConceptMapper:
    """Scores raw terms against a vocabulary snapshot; tracks the unmapped count."""

    def __init__(self, terms: Sequence[OntologyTerm], alpha: float = DEFAULT_ALPHA,
                 embedder: Optional[EmbeddingProvider] = None, floor: float = DEFAULT_FLOOR):
        if not terms:
            raise OntologyError("empty vocabulary set")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.terms = list(terms)
        self.alpha = alpha
        self.embedder = embedder or HashingEmbedder()
        self.floor = floor
        self.attempted = 0
        self.unmapped = 0

    def score(self, raw: str, term: OntologyTerm) -> ConceptMapping:
        lex = lexical_similarity(raw, term)
        sem = 0.0
        if raw.strip() and term.label.strip():
            sem = min(1.0, max(0.0, cosine(self.embedder.embed(raw), self.embedder.embed(term.label))))
        score = self.alpha * lex + (1.0 - self.alpha) * sem
        return ConceptMapping(raw, term, lex, sem, score, self.alpha)

    def best(self, raw: str) -> Optional[ConceptMapping]:
        best: Optional[ConceptMapping] = None
        best_key = None
        for term in self.terms:
            m = self.score(raw, term)
            key = (-m.score, VOCAB_PRIORITY[term.vocabulary], term.code)
            if best_key is None or key < best_key:
                best, best_key = m, key
        return best

    def map(self, raw: str) -> Optional[ConceptMapping]:
        self.attempted += 1
        m = self.best(raw)
        if m is None or m.score < self.floor:
            self.unmapped += 1
            return None
        return m

    @property
    def unmapped_rate(self) -> float:
        return unmapped_rate(self.attempted, self.unmapped)


def map_concept(raw: str, vocabs: Sequence[OntologyTerm], alpha: float = DEFAULT_ALPHA,
                embed_provider: Optional[EmbeddingProvider] = None,
                floor: float = DEFAULT_FLOOR) -> Optional[ConceptMapping]:
    return ConceptMapper(vocabs, alpha, embed_provider, floor).map(raw)


def unmapped_rate(attempted: int, unmapped: int) -> float:
    if unmapped > attempted or unmapped < 0:
        raise ValueError("unmapped count must lie in [0, attempted]")
    return unmapped / attempted if attempted else 0.0


# -- schema -------------------------------------------------------------------

class DeclKind(str, enum.Enum):
    CLASS = "ClassDecl"
    OBJECT_PROPERTY = "ObjectProperty"
    SUBCLASS_OF = "SubClassOf"
    DOMAIN_RANGE = "DomainRange"
    EQUIVALENT_CLASS = "EquivalentClass"


@dataclass(frozen=True, order=True)
class SchemaDecl:
    kind: DeclKind
    subject: str
    object: Optional[str] = None
    domain: Optional[str] = None
    range: Optional[str] = None

    def to_line(self, prefixes: Optional[Mapping[str, str]] = None) -> str:
        p = dict(prefixes or {})
        parts = [self.subject, self.object, self.domain, self.range]
        return " ".join([self.kind.value] + [ns.compact(x, p) for x in parts if x])


@dataclass(frozen=True, order=True)
class RestrictionAxiom:
    """``cls AND (some prop . filler) SubClassOf sup``."""

    cls: str
    prop: str
    filler: str
    sup: str


@dataclass
class TBox:
    decls: list[SchemaDecl] = field(default_factory=list)
    restrictions: list[RestrictionAxiom] = field(default_factory=list)
    prefixes: dict[str, str] = field(default_factory=lambda: dict(ns.DEFAULT_PREFIXES))


_ARITY = {"Class": 1, "ClassDecl": 1, "ObjectProperty": 1, "SubClassOf": 2,
          "EquivalentClass": 2, "DomainRange": 3, "Restriction": 4}


def parse_tbox(text: str, prefixes: Optional[Mapping[str, str]] = None) -> TBox:
    """Parse one axiom per line.

    ::

        @prefix kg: <http://example.org/kg#>
        SubClassOf kg:ElevatedCA19_9 kg:AbnormalTumorMarker
        DomainRange kg:hasLabResult fhir:Observation kg:LabTest
        Restriction kg:Biopsy kg:hasOutcome kg:Malignant kg:PositiveFinding
    """
    tbox = TBox()
    if prefixes:
        tbox.prefixes.update(prefixes)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = re.sub(r"(^|\s)#.*$", "", raw).strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "@prefix":
            if len(parts) < 3:
                raise OntologyError(f"line {lineno}: malformed @prefix")
            tbox.prefixes[parts[1].rstrip(":")] = ns.expand(parts[2].rstrip("."), tbox.prefixes)
            continue
        head, args = parts[0], parts[1:]
        if head not in _ARITY or len(args) != _ARITY[head]:
            raise OntologyError(f"line {lineno}: cannot parse axiom {raw.strip()!r}")
        try:
            iris = [ns.expand(a, tbox.prefixes) for a in args]
        except ValueError as exc:
            raise OntologyError(f"line {lineno}: {exc}") from None
        if head in ("Class", "ClassDecl"):
            tbox.decls.append(SchemaDecl(DeclKind.CLASS, iris[0]))
        elif head == "ObjectProperty":
            tbox.decls.append(SchemaDecl(DeclKind.OBJECT_PROPERTY, iris[0]))
        elif head == "SubClassOf":
            tbox.decls.append(SchemaDecl(DeclKind.SUBCLASS_OF, iris[0], iris[1]))
        elif head == "EquivalentClass":
            tbox.decls.append(SchemaDecl(DeclKind.EQUIVALENT_CLASS, iris[0], iris[1]))
        elif head == "DomainRange":
            tbox.decls.append(SchemaDecl(DeclKind.OBJECT_PROPERTY, iris[0]))
            tbox.decls.append(SchemaDecl(DeclKind.DOMAIN_RANGE, iris[0], domain=iris[1], range=iris[2]))
        else:
            tbox.restrictions.append(RestrictionAxiom(*iris))
    return tbox


def load_tbox(path: str | Path, prefixes: Optional[Mapping[str, str]] = None) -> TBox:
    return parse_tbox(Path(path).read_text(encoding="utf-8"), prefixes)


def find_subclass_cycle(decls: Iterable[SchemaDecl]) -> Optional[list[str]]:
    graph: dict[str, list[str]] = defaultdict(list)
    for d in decls:
        if d.kind is DeclKind.SUBCLASS_OF and d.object:
            graph[d.subject].append(d.object)
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[str, int] = defaultdict(int)

    for root in sorted(graph):
        if color[root] != WHITE:
            continue
        path = [root]
        color[root] = GREY
        stack = [iter(sorted(graph[root]))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                color[path.pop()] = BLACK
                continue
            if color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append(iter(sorted(graph[nxt])))
    return None


def check_acyclic(decls: Iterable[SchemaDecl]) -> None:
    cycle = find_subclass_cycle(decls)
    if cycle:
        raise SchemaCycleError(cycle)


def default_endpoint_types(eavs: Iterable) -> dict[str, str]:
    """Class IRI for every known endpoint name: entities by FHIR type,
    attributes by a class minted from the attribute name."""
    types: dict[str, str] = {}
    for e in eavs:
        types.setdefault(e.attribute.casefold(), ns.kg(e.attribute))
    for e in eavs:
        types[e.entity.casefold()] = ns.fhir_class(e.fhir_type.value)
    return types


def build_schema(mappings: Iterable[Optional[ConceptMapping]],
                 eavs: Iterable = (),
                 relations: Iterable = (),
                 tbox: Optional[TBox] = None,
                 *,
                 endpoint_types: Optional[Mapping[str, str]] = None,
                 predicate_iri=None) -> list[SchemaDecl]:
    """Assemble the schema from mapped concepts, relation usage and a TBox.

    Relations need ``head``, ``predicate`` and ``tail`` attributes. Each
    predicate gets the domain/range pair observed most often for it (ties go
    to the lexicographically smallest pair) unless the TBox declares one.
    """
    eavs = list(eavs)
    predicate_iri = predicate_iri or ns.kg
    types = {k.casefold(): v for k, v in (endpoint_types or default_endpoint_types(eavs)).items()}

    decls: set[SchemaDecl] = set()
    for m in mappings:
        if m is not None and m.term.vocabulary in CLASS_VOCABS:
            decls.add(SchemaDecl(DeclKind.CLASS, m.term.uri))

    pairs: dict[str, Counter] = defaultdict(Counter)
    for rel in relations:
        p = predicate_iri(rel.predicate)
        decls.add(SchemaDecl(DeclKind.OBJECT_PROPERTY, p))
        d = types.get(rel.head.casefold())
        r = types.get(rel.tail.casefold())
        if d and r:
            pairs[p][(d, r)] += 1
    declared = {d.subject for d in (tbox.decls if tbox else ()) if d.kind is DeclKind.DOMAIN_RANGE}
    for p, counter in pairs.items():
        if p in declared:
            continue
        (d, r), _ = min(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        decls.add(SchemaDecl(DeclKind.DOMAIN_RANGE, p, domain=d, range=r))

    if tbox is not None:
        decls.update(tbox.decls)
    ordered = sorted(decls)
    check_acyclic(ordered)
    return ordered
