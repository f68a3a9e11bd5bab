"""Core domain types and JSONL ingestion.

A corpus is a list of :class:`Sentence` rows; a QA dataset is a list of
:class:`QAItem` rows. Both are stored as JSON Lines. A corpus file may start
with a single header record ``{"dim": N}`` declaring the embedding width.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyAnswers,
    EmptyText,
    IoError,
    MalformedRecord,
    SelfPair,
)

NORM_TOL = 1e-6

_WS = re.compile(r"\s+")

COMPONENT_FIELDS = ("sub", "pre", "obj", "att", "adv")


def normalize_phrase(phrase: str | None) -> str | None:
    """Lowercase, trim and collapse whitespace; empty collapses to None."""
    if phrase is None:
        return None
    out = _WS.sub(" ", phrase.strip().lower())
    return out or None


@dataclass(frozen=True)
class Components:
    """Grammatical components of one sentence.

    ``sub``/``pre``/``obj`` are subject, predicate phrase and object;
    ``att``/``adv`` are attributive and adverbial. Absent components are
    None. Phrases are normalized at construction.
    """

    sub: str | None = None
    pre: str | None = None
    obj: str | None = None
    att: str | None = None
    adv: str | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not isinstance(value, str):
                raise MalformedRecord(f"component {f.name} must be a string or null")
            object.__setattr__(self, f.name, normalize_phrase(value))

    def to_dict(self) -> dict:
        return {k: v for k in COMPONENT_FIELDS if (v := getattr(self, k)) is not None}

    @classmethod
    def from_dict(cls, obj: dict) -> "Components":
        if not isinstance(obj, dict):
            raise MalformedRecord("components must be an object")
        unknown = set(obj) - set(COMPONENT_FIELDS)
        if unknown:
            raise MalformedRecord(f"unknown component fields: {sorted(unknown)}")
        return cls(**obj)


def _as_embedding(value) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float32)
    except (TypeError, ValueError) as e:
        raise MalformedRecord(f"embedding is not a numeric vector: {e}")
    if arr.ndim != 1 or arr.size == 0:
        raise MalformedRecord("embedding must be a non-empty flat vector")
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if abs(norm - 1.0) > NORM_TOL:
        raise MalformedRecord(f"embedding L2 norm {norm!r} is not within {NORM_TOL} of 1.0")
    return arr


@dataclass(eq=False)
class Sentence:
    """One retrievable context: id, surface text, optional gold components,
    optional unit-norm float32 embedding."""

    id: str
    text: str
    components: Components | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise MalformedRecord("id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text:
            raise EmptyText(f"sentence {self.id!r} has empty text")
        if self.components is not None and not isinstance(self.components, Components):
            self.components = Components.from_dict(self.components)
        if self.embedding is not None:
            self.embedding = _as_embedding(self.embedding)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sentence):
            return NotImplemented
        if (self.id, self.text, self.components) != (other.id, other.text, other.components):
            return False
        if (self.embedding is None) != (other.embedding is None):
            return False
        return self.embedding is None or np.array_equal(self.embedding, other.embedding)

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "text": self.text}
        if self.components is not None:
            out["components"] = self.components.to_dict()
        if self.embedding is not None:
            out["embedding"] = [float(v) for v in self.embedding]
        return out


@dataclass(frozen=True)
class Choice:
    label: str
    text: str

    def to_dict(self) -> dict:
        return {"label": self.label, "text": self.text}


@dataclass(eq=True)
class QAItem:
    """One evaluation item: a question, its gold answers, optional multiple
    choice candidates, optional task instruction, optional gold components
    for the question (lets the offline rule judge run without extraction)."""

    question: str
    answers: tuple[str, ...]
    choices: tuple[Choice, ...] | None = None
    task_instruction: str | None = None
    components: Components | None = None

    def __post_init__(self):
        if not isinstance(self.question, str) or not self.question:
            raise EmptyText("question is empty")
        answers = tuple(self.answers)
        if not answers:
            raise EmptyAnswers()
        for a in answers:
            if not isinstance(a, str) or not a:
                raise MalformedRecord("answers must be non-empty strings")
        self.answers = answers
        if self.choices is not None:
            parsed = []
            for c in self.choices:
                if isinstance(c, Choice):
                    parsed.append(c)
                elif isinstance(c, dict) and set(c) == {"label", "text"}:
                    parsed.append(Choice(str(c["label"]), str(c["text"])))
                else:
                    raise MalformedRecord(f"choice must have label and text: {c!r}")
            labels = {c.label for c in parsed}
            missing = [a for a in self.answers if a not in labels]
            if missing:
                raise MalformedRecord(f"gold answers {missing} are not choice labels")
            self.choices = tuple(parsed)
        if self.components is not None and not isinstance(self.components, Components):
            self.components = Components.from_dict(self.components)

    def to_dict(self) -> dict:
        out: dict = {"question": self.question, "answers": list(self.answers)}
        if self.choices is not None:
            out["choices"] = [c.to_dict() for c in self.choices]
        if self.task_instruction is not None:
            out["task_instruction"] = self.task_instruction
        if self.components is not None:
            out["components"] = self.components.to_dict()
        return out


@dataclass(frozen=True, order=True)
class PairKey:
    """Unordered pair of sentence ids, stored with ``lo < hi``."""

    lo: str
    hi: str


def make_pair_key(a: str, b: str) -> PairKey:
    """Build the canonical unordered pair; a == b raises SelfPair."""
    if a == b:
        raise SelfPair(a)
    return PairKey(a, b) if a < b else PairKey(b, a)


def _iter_jsonl(path) -> Iterable[tuple[int, dict]]:
    """Yield (1-based line number, parsed object) for non-blank lines."""
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
        if not isinstance(obj, dict):
            raise MalformedRecord("record must be a JSON object", line=lineno)
        yield lineno, obj


_SENTENCE_KEYS = {"id", "text", "components", "embedding"}


def load_corpus(path) -> list[Sentence]:
    """Parse a corpus JSONL file.

    The first record may be a ``{"dim": N}`` header; every embedding in the
    file must then have exactly N entries. Without a header the width is
    inferred from the first embedded row. Duplicate ids and inconsistent
    embedding widths are rejected.
    """
    sentences: list[Sentence] = []
    seen: set[str] = set()
    dim: int | None = None
    first = True
    for lineno, obj in _iter_jsonl(path):
        if first and set(obj) == {"dim"}:
            if not isinstance(obj["dim"], int) or obj["dim"] < 1:
                raise MalformedRecord("dim header must be a positive integer", line=lineno)
            dim = obj["dim"]
            first = False
            continue
        first = False
        unknown = set(obj) - _SENTENCE_KEYS
        if unknown:
            raise MalformedRecord(f"unknown fields: {sorted(unknown)}", line=lineno)
        if "id" not in obj or "text" not in obj:
            raise MalformedRecord("record needs id and text", line=lineno)
        try:
            sent = Sentence(
                id=obj["id"],
                text=obj["text"],
                components=obj.get("components"),
                embedding=obj.get("embedding"),
            )
        except (MalformedRecord, EmptyText) as e:
            raise MalformedRecord(str(e), line=lineno) from e
        if sent.id in seen:
            raise DuplicateId(sent.id)
        seen.add(sent.id)
        if sent.embedding is not None:
            if dim is None:
                dim = int(sent.embedding.shape[0])
            elif sent.embedding.shape[0] != dim:
                raise DimensionMismatch(
                    f"line {lineno}: embedding has {sent.embedding.shape[0]} entries, expected {dim}"
                )
        sentences.append(sent)
    return sentences


def save_corpus(sentences: Sequence[Sentence], path, dim: int | None = None) -> None:
    """Write a corpus JSONL file; emits a dim header when the width is known."""
    if dim is None:
        for s in sentences:
            if s.embedding is not None:
                dim = int(s.embedding.shape[0])
                break
    try:
        with open(path, "w", encoding="utf-8") as fh:
            if dim is not None:
                fh.write(json.dumps({"dim": dim}) + "\n")
            for s in sentences:
                fh.write(json.dumps(s.to_dict()) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


_QA_KEYS = {"question", "answers", "choices", "task_instruction", "components"}


def load_qa_dataset(path) -> list[QAItem]:
    """Parse a QA JSONL file of question/answers rows."""
    items: list[QAItem] = []
    for lineno, obj in _iter_jsonl(path):
        unknown = set(obj) - _QA_KEYS
        if unknown:
            raise MalformedRecord(f"unknown fields: {sorted(unknown)}", line=lineno)
        if "question" not in obj or "answers" not in obj:
            raise MalformedRecord("record needs question and answers", line=lineno)
        if not isinstance(obj["answers"], list):
            raise MalformedRecord("answers must be a list", line=lineno)
        try:
            items.append(
                QAItem(
                    question=obj["question"],
                    answers=tuple(obj["answers"]),
                    choices=obj.get("choices"),
                    task_instruction=obj.get("task_instruction"),
                    components=obj.get("components"),
                )
            )
        except EmptyAnswers:
            raise EmptyAnswers(line=lineno)
        except (MalformedRecord, EmptyText) as e:
            raise MalformedRecord(str(e), line=lineno) from e
    return items


def save_qa_dataset(items: Sequence[QAItem], path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for item in items:
                fh.write(json.dumps(item.to_dict()) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
