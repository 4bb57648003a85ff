"""Lexicon: lemma -> motion category / relation kind lookup tables.

The file format is line-oriented UTF-8 text, one entry per line:

    lemma<TAB>class<TAB>category<TAB>hint

with '#' comments. ``class`` is ``verb``, ``noun`` or ``relation``.
Two ``*`` rows (one verb, one noun) define the mandatory fallback
entries so that lookup is total.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

from .graph import KinematicHint, MotionCategory, RelationKind


@dataclass(frozen=True)
class WordEntry:
    category: MotionCategory
    hint: KinematicHint


@dataclass(frozen=True)
class RelationEntry:
    kind: RelationKind
    placement: str | None


@dataclass(frozen=True)
class Lexicon:
    verb_entries: dict[str, WordEntry]
    noun_entries: dict[str, WordEntry]
    relation_entries: dict[str, RelationEntry]

    def __post_init__(self) -> None:
        if "*" not in self.verb_entries or "*" not in self.noun_entries:
            raise ValueError("lexicon must define '*' fallback verb and noun entries")

    def lookup_verb(self, lemma: str) -> WordEntry:
        entry = self.verb_entries.get(self._lemmatize(lemma, self.verb_entries))
        return entry if entry is not None else self.verb_entries["*"]

    def lookup_noun(self, lemma: str) -> WordEntry:
        entry = self.noun_entries.get(self._lemmatize(lemma, self.noun_entries))
        return entry if entry is not None else self.noun_entries["*"]

    def is_verb(self, word: str) -> bool:
        return self._lemmatize(word, self.verb_entries) in self.verb_entries

    def is_noun(self, word: str) -> bool:
        return self._lemmatize(word, self.noun_entries) in self.noun_entries

    @staticmethod
    def _lemmatize(word: str, table: dict) -> str:
        """Surface form first, then a few cheap suffix strips."""
        word = word.lower()
        if word in table:
            return word
        for suffix, repl in (("ies", "y"), ("ing", ""), ("ing", "e"),
                             ("ed", ""), ("ed", "e"), ("es", ""), ("s", "")):
            if word.endswith(suffix) and len(word) > len(suffix) + 1:
                candidate = word[: len(word) - len(suffix)] + repl
                if candidate in table:
                    return candidate
        return word


def _parse_hint(text: str) -> KinematicHint:
    if not text or text == "-":
        return KinematicHint()
    fields: dict[str, str] = {}
    for item in text.split(","):
        key, _, value = item.partition("=")
        fields[key.strip()] = value.strip()
    return KinematicHint(
        speed=fields.get("speed", "medium"),
        oscillation=fields.get("osc", "none"),
        direction=fields.get("dir", "right"),
    )


def load_lexicon(path: str | Path) -> Lexicon:
    verbs: dict[str, WordEntry] = {}
    nouns: dict[str, WordEntry] = {}
    relations: dict[str, RelationEntry] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
        lemma, cls, category, hint = (p.strip() for p in parts)
        lemma = lemma.lower()
        if cls == "verb":
            verbs[lemma] = WordEntry(MotionCategory(category), _parse_hint(hint))
        elif cls == "noun":
            nouns[lemma] = WordEntry(MotionCategory(category), _parse_hint(hint))
        elif cls == "relation":
            placement = None if hint in ("", "-") else hint
            relations[lemma] = RelationEntry(RelationKind(category), placement)
        else:
            raise ValueError(f"{path}:{lineno}: unknown class {cls!r}")
    return Lexicon(verb_entries=verbs, noun_entries=nouns, relation_entries=relations)


def default_lexicon() -> Lexicon:
    resource = importlib.resources.files("motionguide.data") / "lexicon.tsv"
    with importlib.resources.as_file(resource) as path:
        return load_lexicon(path)
