"""Consistency rules and the phrase lexicon.

A rule names the component fields that must be pairwise similar whenever two
sentences are treated as semantically consistent. Phrase similarity is
decided against a lexicon of synonym sets and antonym pairs; phrases with no
recorded relation are treated as dissimilar, keeping the judge conservative.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .errors import IoError, MalformedRecord
from .model import COMPONENT_FIELDS, Components, normalize_phrase

# Interrogative placeholders: a question like "Who turned on the radio?" is
# compatible with any concrete subject, so these phrases compare as similar
# to anything.
WILDCARD_PHRASES = frozenset(
    {"who", "what", "whom", "whose", "which", "when", "where", "why", "how"}
)


@dataclass(frozen=True)
class CMDRule:
    """A named rule listing the component fields it requires to be similar."""

    name: str
    requires: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise MalformedRecord("rule name must be non-empty")
        if not self.requires:
            raise MalformedRecord("rule must require at least one component field")
        bad = [f for f in self.requires if f not in COMPONENT_FIELDS]
        if bad:
            raise MalformedRecord(f"rule {self.name!r} requires unknown fields: {bad}")


PHI1 = CMDRule("phi1", ("sub", "pre", "obj"))
PHI2 = CMDRule("phi2", ("att", "adv"))

RULES_BY_NAME = {"phi1": PHI1, "phi2": PHI2}


class Lexicon:
    """Synonym sets and antonym pairs over normalized phrases.

    Invariants: a phrase belongs to at most one synonym set, and no antonym
    pair sits inside a single synonym set.
    """

    def __init__(
        self,
        synonym_sets: Iterable[Iterable[str]] = (),
        antonym_pairs: Iterable[tuple[str, str]] = (),
    ):
        self.synonym_sets: tuple[frozenset[str], ...] = ()
        self._syn_of: dict[str, int] = {}
        sets = []
        for group in synonym_sets:
            phrases = []
            for p in group:
                q = normalize_phrase(p) if isinstance(p, str) else None
                if q is None:
                    raise MalformedRecord("synonym set contains an empty phrase")
                phrases.append(q)
            unique = sorted(set(phrases))
            if len(unique) < 2:
                raise MalformedRecord("synonym set needs at least two distinct phrases")
            for p in unique:
                if p in self._syn_of:
                    raise MalformedRecord(f"phrase {p!r} appears in two synonym sets")
                self._syn_of[p] = len(sets)
            sets.append(frozenset(unique))
        self.synonym_sets = tuple(sets)

        pairs: list[tuple[str, str]] = []
        index: set[frozenset[str]] = set()
        for raw in antonym_pairs:
            pair = tuple(
                normalize_phrase(p) if isinstance(p, str) else None for p in raw
            )
            if len(pair) != 2 or None in pair or pair[0] == pair[1]:
                raise MalformedRecord(f"antonym pair must be two distinct phrases: {raw!r}")
            a, b = sorted(pair)
            key = frozenset((a, b))
            if key in index:
                continue
            if self._syn_of.get(a) is not None and self._syn_of.get(a) == self._syn_of.get(b):
                raise MalformedRecord(f"antonym pair {a!r}/{b!r} sits inside one synonym set")
            index.add(key)
            pairs.append((a, b))
        self.antonym_pairs: tuple[tuple[str, str], ...] = tuple(pairs)
        self._ant_index = frozenset(index)

    def are_synonyms(self, a: str, b: str) -> bool:
        ia = self._syn_of.get(a)
        return ia is not None and ia == self._syn_of.get(b)

    def are_antonyms(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self._ant_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, Lexicon):
            return NotImplemented
        return (
            self.synonym_sets == other.synonym_sets
            and self.antonym_pairs == other.antonym_pairs
        )


# Shipped starter lexicon: verb-phrase antonyms usable as benchmark
# predicates, plus a few synonym groups.
_DEFAULT_SYNONYMS = [
    ["turn on", "switch on", "activate"],
    ["turn off", "switch off", "deactivate"],
    ["begin", "commence"],
    ["car", "automobile"],
]

_DEFAULT_ANTONYMS = [
    ("turn on", "turn off"),
    ("open", "close"),
    ("increase", "decrease"),
    ("before", "after"),
    ("start", "stop"),
    ("raise", "lower"),
    ("push", "pull"),
    ("buy", "sell"),
    ("win", "lose"),
    ("accept", "reject"),
    ("attach", "detach"),
    ("lock", "unlock"),
    ("extend", "retract"),
    ("inflate", "deflate"),
    ("connect", "disconnect"),
    ("enable", "disable"),
    ("freeze", "thaw"),
    ("lengthen", "shorten"),
    ("brighten", "darken"),
    ("enter", "exit"),
    ("expand", "contract"),
    ("accelerate", "decelerate"),
    ("charge", "discharge"),
    ("assemble", "disassemble"),
]

DEFAULT_LEXICON = Lexicon(_DEFAULT_SYNONYMS, _DEFAULT_ANTONYMS)


def load_lexicon(path) -> Lexicon:
    """Parse a lexicon JSONL file of {"syn": [...]} and {"ant": [a, b]} rows."""
    synonym_sets: list[list[str]] = []
    antonym_pairs: list[tuple[str, str]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"invalid JSON: {e}", line=lineno)
        if not isinstance(obj, dict) or len(obj) != 1:
            raise MalformedRecord("row must be {'syn': [...]} or {'ant': [a, b]}", line=lineno)
        if "syn" in obj:
            if not isinstance(obj["syn"], list):
                raise MalformedRecord("syn must be a list of phrases", line=lineno)
            synonym_sets.append(obj["syn"])
        elif "ant" in obj:
            if not isinstance(obj["ant"], list) or len(obj["ant"]) != 2:
                raise MalformedRecord("ant must be a pair of phrases", line=lineno)
            antonym_pairs.append(tuple(obj["ant"]))
        else:
            raise MalformedRecord("row must have a syn or ant key", line=lineno)
    try:
        return Lexicon(synonym_sets, antonym_pairs)
    except MalformedRecord as e:
        raise MalformedRecord(f"{path}: {e}") from e


def save_lexicon(lexicon: Lexicon, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for group in lexicon.synonym_sets:
                fh.write(json.dumps({"syn": sorted(group)}) + "\n")
            for a, b in lexicon.antonym_pairs:
                fh.write(json.dumps({"ant": [a, b]}) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def compare_components(
    a: Components, b: Components, field: str, lexicon: Lexicon
) -> bool:
    """Decide whether one component field of two sentences is similar.

    Rules, in order: a side with the component absent is vacuously similar;
    interrogative placeholders match anything; equal phrases match; listed
    antonyms are dissimilar (checked before synonyms); shared synonym set
    matches; any other pair is dissimilar.
    """
    if field not in COMPONENT_FIELDS:
        raise MalformedRecord(f"unknown component field: {field!r}")
    pa = getattr(a, field)
    pb = getattr(b, field)
    if pa is None or pb is None:
        return True
    if pa in WILDCARD_PHRASES or pb in WILDCARD_PHRASES:
        return True
    if pa == pb:
        return True
    if lexicon.are_antonyms(pa, pb):
        return False
    if lexicon.are_synonyms(pa, pb):
        return True
    return False
