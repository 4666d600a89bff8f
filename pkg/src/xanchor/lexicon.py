"""Bilingual dictionaries and multi-sense filtering.

Dictionary files hold one ``source target`` pair per line, separated by
whitespace; surfaces are lowercased on load.  Filtering drops pairs whose
source- or target-side word is (or shares a lemma with) a known multi-sense
word, which removes exactly the rows that would supervise a mapping toward a
sense mixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .embed_io import AnchorTable
from .errors import DataError, FormatError

SIDES = ("source", "target")


@dataclass(frozen=True)
class BilingualLexicon:
    pairs: tuple[tuple[str, str], ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MultiSenseList:
    words: frozenset[str]
    side: str

    def __post_init__(self):
        if self.side not in SIDES:
            raise DataError(f"side must be one of {SIDES}, got {self.side!r}")


@dataclass
class LemmaTable:
    """Surface -> lemma map; absent surfaces are their own lemma."""

    mapping: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for w, l in self.mapping.items():
            if self.mapping.get(l, l) != l:
                raise DataError(f"lemma table not idempotent at {w!r} -> {l!r}")

    def lemma(self, surface: str) -> str:
        return self.mapping.get(surface, surface)


def load_lexicon(path: str | Path, provenance: str = "") -> BilingualLexicon:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise FormatError(f"{path}:{lineno + 1}: expected 2 fields, found {len(fields)}")
            pairs.append((fields[0].lower(), fields[1].lower()))
    return BilingualLexicon(tuple(pairs), provenance or str(path))


def save_lexicon(lex: BilingualLexicon, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, t in lex.pairs:
            fh.write(f"{s} {t}\n")


def load_multisense(path: str | Path, side: str) -> MultiSenseList:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            w = line.strip().lower()
            if w:
                words.add(w)
    return MultiSenseList(frozenset(words), side)


def load_lemmas(path: str | Path) -> LemmaTable:
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno + 1}: expected 2 tab-separated fields")
            surface, lemma = parts[0].lower(), parts[1].lower()
            if surface in mapping and mapping[surface] != lemma:
                raise DataError(f"{path}:{lineno + 1}: conflicting lemma for {surface!r}")
            mapping[surface] = lemma
    return LemmaTable(mapping)


def _side_word(pair: tuple[str, str], side: str) -> str:
    return pair[0] if side == "source" else pair[1]


def filter_form(lex: BilingualLexicon, multisense: MultiSenseList) -> BilingualLexicon:
    """Drop pairs whose listed-side word is itself in the multi-sense list."""
    kept = tuple(
        p for p in lex.pairs if _side_word(p, multisense.side) not in multisense.words
    )
    return BilingualLexicon(kept, lex.provenance)


def filter_lemma(
    lex: BilingualLexicon, multisense: MultiSenseList, lemmas: LemmaTable
) -> BilingualLexicon:
    """Drop pairs whose listed-side word shares a lemma with a multi-sense word.

    Strictly at least as aggressive as :func:`filter_form`: every listed word
    maps to a removal lemma, so its own pairs always go too.
    """
    removal = {lemmas.lemma(w) for w in multisense.words}
    kept = tuple(
        p
        for p in lex.pairs
        if lemmas.lemma(_side_word(p, multisense.side)) not in removal
    )
    return BilingualLexicon(kept, lex.provenance)


class RemovalResult(NamedTuple):
    table: AnchorTable
    removed: int
    missing: int


def remove_anchor_rows(table: AnchorTable, multisense: MultiSenseList) -> RemovalResult:
    """Delete anchor rows whose key is a listed multi-sense word.

    Listed words without a row are skipped; the counts of removed and missing
    words are reported alongside the new table.
    """
    keep = [i for i, k in enumerate(table.keys) if k not in multisense.words]
    removed = len(table) - len(keep)
    missing = len(multisense.words) - removed
    return RemovalResult(table.select(keep), removed, missing)


def restrict_valid_pairs(
    lex: BilingualLexicon, src_table: AnchorTable, tgt_table: AnchorTable
) -> BilingualLexicon:
    """Keep pairs where both sides have an anchor row.

    Cluster rows ``w#j`` count as coverage of their parent surface ``w``.
    """
    src_known = src_table.parents()
    tgt_known = tgt_table.parents()
    kept = tuple(p for p in lex.pairs if p[0] in src_known and p[1] in tgt_known)
    return BilingualLexicon(kept, lex.provenance)
