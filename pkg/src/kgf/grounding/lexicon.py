"""Tokenization, rule-based lemmas, synonyms, negation cues and spelling fixes.

Every table is a plain text file (one mapping per line, ``#`` comments) so
deployments can extend them without code changes. Defaults ship in
``kgf/data``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

_WORD = re.compile(r"\w+(?:['’]\w+)?")

SCOPE_WINDOW = 5
# words that close a negation scope early ("denies fever but reports chills")
SCOPE_BREAKERS = frozenset({"but", "however", "although", "though", "except", "yet"})


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int

    @property
    def norm(self) -> str:
        return self.text.casefold()


def tokenize(text: str) -> list[Token]:
    return [Token(m.group(), m.start(), m.end()) for m in _WORD.finditer(text)]


def _lines(text: str) -> Iterable[str]:
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield line


def _read(source: Optional[str | Path], default_name: str) -> str:
    if source is not None:
        return Path(source).read_text(encoding="utf-8")
    return resources.files("kgf.data").joinpath(default_name).read_text(encoding="utf-8")


@dataclass
class Lexicon:
    synonyms: dict[str, frozenset[str]] = field(default_factory=dict)
    lemma_rules: list[tuple[str, str]] = field(default_factory=list)
    irregular: dict[str, str] = field(default_factory=dict)
    negation_cues: tuple[tuple[str, ...], ...] = ()
    fixes: dict[str, str] = field(default_factory=dict)
    min_stem: int = 3

    @classmethod
    def load(cls, *, synonyms=None, lemma_rules=None, irregular=None,
             negation_cues=None, fixes=None) -> "Lexicon":
        lex = cls()
        for line in _lines(_read(synonyms, "synonyms.txt")):
            group = [" ".join(m.casefold().split()) for m in line.split("|") if m.strip()]
            members = frozenset(group)
            for term in group:
                lex.synonyms[term] = lex.synonyms.get(term, frozenset()) | members
        for line in _lines(_read(lemma_rules, "lemma_rules.txt")):
            suffix, _, repl = line.partition("->")
            lex.lemma_rules.append((suffix.strip().lstrip("-"), repl.strip().lstrip("-")))
        for line in _lines(_read(irregular, "irregular_lemmas.txt")):
            form, lemma = line.split("\t")
            lex.irregular[form.strip().casefold()] = lemma.strip().casefold()
        lex.negation_cues = tuple(
            tuple(line.casefold().split()) for line in _lines(_read(negation_cues, "negation_cues.txt")))
        for line in _lines(_read(fixes, "explicit_fixes.txt")):
            wrong, right = line.split("\t")
            lex.fixes[wrong.strip().casefold()] = right.strip()
        return lex

    # -- lemmas -------------------------------------------------------------

    def lemma(self, word: str) -> str:
        w = word.casefold()
        w = self.irregular.get(w, w)
        for suffix, repl in self.lemma_rules:
            if w.endswith(suffix) and len(w) - len(suffix) >= self.min_stem:
                return w[: len(w) - len(suffix)] + repl
        return w

    def lemmas(self, text: str) -> list[str]:
        return [self.lemma(t.text) for t in tokenize(text)]

    # -- synonyms -----------------------------------------------------------

    def synonyms_of(self, term: str) -> list[str]:
        key = " ".join(term.casefold().split())
        return sorted(self.synonyms.get(key, frozenset()) - {key})

    # -- negation -----------------------------------------------------------

    def cue_ends(self, tokens: list[Token]) -> list[int]:
        """Indices of the last token of every negation cue occurrence."""
        norms = [t.norm for t in tokens]
        ends = []
        for i in range(len(norms)):
            for cue in self.negation_cues:
                if tuple(norms[i:i + len(cue)]) == cue:
                    ends.append(i + len(cue) - 1)
        return sorted(set(ends))

    def is_negated(self, tokens: list[Token], term_index: int, window: int = SCOPE_WINDOW) -> bool:
        """True when a cue ends at most ``window`` tokens left of ``term_index``."""
        for end in self.cue_ends(tokens):
            if 0 < term_index - end <= window:
                between = {t.norm for t in tokens[end + 1:term_index]}
                if not between & SCOPE_BREAKERS:
                    return True
        return False

    # -- spelling fixes -----------------------------------------------------

    def apply_fixes(self, text: str) -> tuple[str, list[int]]:
        """Rewrite known misspellings.

        Returns the fixed text and, for each character of it, the index of the
        originating character in ``text`` (so spans can be mapped back).
        """
        out: list[str] = []
        index: list[int] = []
        pos = 0
        for tok in tokenize(text):
            fix = self.fixes.get(tok.norm)
            if fix is None:
                continue
            out.append(text[pos:tok.start])
            index.extend(range(pos, tok.start))
            out.append(fix)
            # every character of the replacement maps into the original token
            index.extend(min(tok.start + k, tok.end - 1) for k in range(len(fix)))
            pos = tok.end
        out.append(text[pos:])
        index.extend(range(pos, len(text)))
        return "".join(out), index


_DEFAULT: Optional[Lexicon] = None


def default_lexicon() -> Lexicon:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Lexicon.load()
    return _DEFAULT
