"""Rule-based prompt parser: compositional prompt -> motion graph.

Shallow, deterministic grammar: longest-match relation phrases from the
lexicon, noun-phrase chunking over determiners, and verb attachment to
the nearest noun. No dependency parsing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import EmptyPrompt, NoInstanceFound
from .graph import (InstanceNode, KinematicHint, MotionCategory, MotionGraph,
                    RelationEdge)
from .lexicon import Lexicon

DETERMINERS = {
    "a", "an", "the", "one", "two", "three", "four", "five", "some",
    "several", "many", "its", "his", "her", "their", "this", "that",
}

# Prepositions that introduce a path adjunct ("driving down the street");
# the noun phrase they govern is scenery, not an instance.
PATH_PREPS = {"down", "along", "through", "across", "past", "up", "into", "onto", "around"}

STOPWORDS = {"and", "while", "with", "as", "is", "are", "was", "were", "at", "in", "of", "to", "by"}

IRREGULAR_PLURALS = {"men": "man", "women": "woman", "children": "child", "geese": "goose"}

CATEGORY_PRIORITY = {
    MotionCategory.NONRIGID: 2,
    MotionCategory.RIGID: 1,
    MotionCategory.MOTIONLESS: 0,
}


def _tokenize(prompt: str) -> list[str]:
    return re.findall(r"[a-z0-9]+(?:-[a-z0-9]+)*", prompt.lower())


def classify_motion(attributes: list[str], noun: str,
                    lexicon: Lexicon) -> MotionCategory:
    """Category of the highest-priority predicate, else the noun default.

    Total: unknown verbs resolve through the lexicon's fallback entry
    (rigid), unknown nouns through the noun fallback (motionless).
    """
    if attributes:
        best = max(
            (lexicon.lookup_verb(a).category for a in attributes),
            key=CATEGORY_PRIORITY.__getitem__,
        )
        return best
    return lexicon.lookup_noun(noun).category


def _hint_for(attributes: list[str], noun: str, lexicon: Lexicon,
              category: MotionCategory) -> KinematicHint:
    for attr in attributes:
        entry = lexicon.lookup_verb(attr)
        if entry.category is category:
            return entry.hint
    return lexicon.lookup_noun(noun).hint


@dataclass
class _PendingRelation:
    phrase: str
    src: int | None


def parse_prompt(prompt: str, lexicon: Lexicon) -> MotionGraph:
    """Parse a compositional prompt into a motion graph.

    Deterministic: identical (prompt, lexicon) always yields an
    identical graph. Raises EmptyPrompt / NoInstanceFound.
    """
    if not prompt or not prompt.strip():
        raise EmptyPrompt("prompt is empty")
    tokens = _tokenize(prompt)

    # Longest-match scan for multi-token relation phrases.
    relation_lemmas = sorted(lexicon.relation_entries, key=lambda p: -len(p.split()))
    relation_at: dict[int, tuple[str, int]] = {}  # start index -> (phrase, span)
    consumed = [False] * len(tokens)
    for phrase in relation_lemmas:
        words = phrase.split()
        n = len(words)
        for i in range(len(tokens) - n + 1):
            if any(consumed[i:i + n]):
                continue
            if tokens[i:i + n] == words:
                relation_at[i] = (phrase, n)
                for j in range(i, i + n):
                    consumed[j] = True

    nodes: list[InstanceNode] = []
    raw_attrs: dict[int, list[str]] = {}
    edges: list[RelationEdge] = []
    pending_attrs: list[str] = []
    pending_relation: _PendingRelation | None = None
    open_np = False          # a determiner opened a noun phrase
    skip_np = False          # inside a path adjunct's noun phrase
    i = 0
    while i < len(tokens):
        if i in relation_at:
            phrase, span = relation_at[i]
            src = nodes[-1].id if nodes else None
            pending_relation = _PendingRelation(phrase=phrase, src=src)
            open_np = False
            skip_np = False
            i += span
            continue
        word = tokens[i]
        i += 1
        if consumed[i - 1]:
            continue
        if word in DETERMINERS:
            open_np = True
            continue
        if word in STOPWORDS:
            continue
        lemma = IRREGULAR_PLURALS.get(word, word)
        if lexicon.is_noun(lemma) or (open_np and not lexicon.is_verb(lemma)
                                      and not word.endswith("ing")):
            open_np = False
            if skip_np:
                skip_np = False
                continue
            node = InstanceNode(id=len(nodes), noun_phrase=lemma)
            nodes.append(node)
            raw_attrs[node.id] = list(pending_attrs)
            pending_attrs.clear()
            if pending_relation is not None:
                entry = lexicon.relation_entries[pending_relation.phrase]
                if pending_relation.src is not None and pending_relation.src != node.id:
                    edges.append(RelationEdge(
                        src=pending_relation.src, dst=node.id, kind=entry.kind,
                        phrase=pending_relation.phrase,
                        placement_hint=entry.placement))
                pending_relation = None
            continue
        if word in PATH_PREPS:
            skip_np = True
            open_np = False
            continue
        if lexicon.is_verb(lemma) or word.endswith("ing") or word.endswith("ed"):
            if skip_np:
                continue
            if nodes and not open_np:
                raw_attrs[nodes[-1].id].append(lemma)
            else:
                pending_attrs.append(lemma)
            continue
        # adjectives and everything else: ignored

    if not nodes:
        raise NoInstanceFound(f"no instance noun phrase matched in {prompt!r}")

    dynamic_srcs = {e.src for e in edges if e.kind.value == "dynamic"}
    for node in nodes:
        attrs = raw_attrs[node.id]
        node.motion_attributes = attrs
        node.category = classify_motion(attrs, node.noun_phrase, lexicon)
        node.hint = _hint_for(attrs, node.noun_phrase, lexicon, node.category)
        # Contextual inference stand-in: a bare noun that drives a dynamic
        # relation is assumed to translate toward its target.
        if not attrs and node.id in dynamic_srcs and node.category is MotionCategory.MOTIONLESS:
            node.category = MotionCategory.RIGID
            node.hint = KinematicHint(speed="medium", oscillation="none", direction="right")

    return MotionGraph(nodes=nodes, edges=edges, source_prompt=prompt)
