"""Retrieval-augmented QA pipeline and its offline benchmark.

Per item the pipeline retrieves top-k contexts, optionally judges them
against the query and drops the inconsistent ones from the prompt while
counting witnesses, optionally rewrites the query with the top retained
passage, prompts a generator, and scores the output by substring match
against the gold answers. Pairs whose witness count reaches the threshold
are cut from the index once the whole item stream has been processed.

The "echo" generator returns the first retained context verbatim, which
keeps the harness fully offline and deterministic.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import requests

from .embedding import EmbedderSpec, embed_text
from .errors import (
    CditError,
    EmptyGolds,
    EmptyInput,
    MalformedRecord,
    NeedAntonyms,
    RemoteUnavailable,
)
from .model import Components, PairKey, QAItem, Sentence
from .rules import DEFAULT_LEXICON, CMDRule, Lexicon
from .trimmer import (
    DEFAULT_SIM_THRESHOLD,
    DEFAULT_THRESHOLD,
    QueryCache,
    WitnessStore,
    apply_threshold_cuts,
    judge_contexts,
)

REWRITE_TEMPLATE = (
    "Given a question [{original}] and its possible answering passages "
    "[{passages}], Give a possible answer."
)

MULTIPLE_CHOICE_INSTRUCTION = (
    "Given four answer candidates, A, B, C and D, choose the best answer "
    "choice. Please answer with the capitalized alphabet only, without "
    "adding any extra phrase or period."
)


def rewrite_query(original: str, top1_doc: str) -> str:
    """Fold the top retained passage into a new self-contained query."""
    if not original or not top1_doc:
        raise EmptyInput("rewrite_query needs a question and a passage")
    return REWRITE_TEMPLATE.format(original=original, passages=top1_doc)


def build_answer_prompt(
    docs: Sequence[str], question: str, task_instruction: str | None = None
) -> str:
    """Assemble the generation prompt: numbered docs as background, the
    question (plus any task instruction) as the instruction."""
    background = " ".join(f"[{i}] {doc}" for i, doc in enumerate(docs, start=1))
    instruction = question if not task_instruction else f"{question} {task_instruction}"
    return f"###Background: {{{background}}}\n###Instruction: {{{instruction}}}\n###Response:"


def _normalize_match(text: str) -> str:
    return " ".join(text.lower().split())


def rough_match(generation: str, golds: Sequence[str]) -> bool:
    """True iff some normalized gold is a substring of the normalized
    generation. Golds that normalize to nothing are ignored."""
    normalized = [g for g in (_normalize_match(g) for g in golds) if g]
    if not normalized:
        raise EmptyGolds("no usable gold answers")
    hay = _normalize_match(generation)
    return any(g in hay for g in normalized)


class EchoGenerator:
    """Offline stand-in: parrots the first retained context."""

    def generate(self, prompt: str, max_new_tokens: int, docs: Sequence[str]) -> str:
        return docs[0] if docs else ""


class RemoteGenerator:
    """HTTP generator: POSTs {"prompt", "max_new_tokens"}, reads {"text"}."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._session = requests.Session()

    def generate(self, prompt: str, max_new_tokens: int, docs: Sequence[str]) -> str:
        try:
            resp = self._session.post(
                self.endpoint,
                json={"prompt": prompt, "max_new_tokens": max_new_tokens},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise RemoteUnavailable(f"generator endpoint failed: {e}") from e
        if not 200 <= resp.status_code < 300:
            raise RemoteUnavailable(
                f"generator endpoint returned status {resp.status_code}"
            )
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError) as e:
            raise RemoteUnavailable(f"generator reply missing text: {e}") from e
        if not isinstance(text, str):
            raise RemoteUnavailable("generator reply text is not a string")
        return text


def make_generator(endpoint: str):
    return EchoGenerator() if endpoint == "echo" else RemoteGenerator(endpoint)


@dataclass
class PipelineConfig:
    """Knobs for one evaluation run.

    ``judge`` is a judge handle (rule or remote); ``embedder`` embeds the
    incoming questions; ``generator`` is an endpoint URL or "echo".
    """

    embedder: EmbedderSpec
    judge: object
    rules: tuple[CMDRule, ...] = ()
    k: int = 10
    generator: str = "echo"
    rewrite_enabled: bool = False
    trim_enabled: bool = False
    max_new_tokens: int = 100
    pairing: str = "as-written"

    def __post_init__(self):
        if self.k < 1:
            raise MalformedRecord("k must be >= 1")
        if self.max_new_tokens < 1:
            raise MalformedRecord("max_new_tokens must be >= 1")
        if self.pairing not in ("as-written", "post-hoc"):
            raise MalformedRecord(f"unknown pairing mode: {self.pairing!r}")
        self.rules = tuple(self.rules)


@dataclass(frozen=True)
class ItemResult:
    question: str
    correct: bool
    error: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"question": self.question, "correct": self.correct}
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class EvalReport:
    dataset: str = ""
    index_kind: str = ""
    k: int = 0
    trim_enabled: bool = False
    total: int = 0
    correct: int = 0
    accuracy: float = 0.0
    judge_calls: int = 0
    skipped: int = 0
    cut_pairs: tuple[PairKey, ...] = ()
    errors: tuple[str, ...] = ()
    items: tuple[ItemResult, ...] = ()
    baseline_accuracy: float | None = None
    delta: float | None = None

    def to_dict(self) -> dict:
        out = {
            "dataset": self.dataset,
            "index_kind": self.index_kind,
            "k": self.k,
            "trim_enabled": self.trim_enabled,
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "judge_calls": self.judge_calls,
            "skipped": self.skipped,
            "cut_pairs": [[p.lo, p.hi] for p in self.cut_pairs],
            "errors": list(self.errors),
            "items": [it.to_dict() for it in self.items],
        }
        if self.baseline_accuracy is not None:
            out["baseline_accuracy"] = self.baseline_accuracy
        if self.delta is not None:
            out["delta"] = self.delta
        return out


def run_pipeline(
    config: PipelineConfig,
    index,
    corpus: Sequence[Sentence],
    qa: Sequence[QAItem],
    store: WitnessStore | None = None,
    cache: QueryCache | None = None,
    dataset: str = "",
) -> EvalReport:
    """Evaluate a QA dataset against the index.

    With trimming enabled, contexts judged inconsistent with the question
    are dropped from the generation prompt immediately, witnesses accumulate
    per query, and pairs reaching the witness threshold are cut from the
    index after the final item. A determiner hit (a cached query within the
    similarity threshold) skips judging and generates from the retrieval
    as-is. Judge or generator failures mark the item incorrect and the run
    continues.
    """
    if store is None:
        store = WitnessStore(DEFAULT_THRESHOLD)
    if cache is None:
        cache = QueryCache(DEFAULT_SIM_THRESHOLD)
    by_id = {s.id: s for s in corpus}
    generator = make_generator(config.generator)
    report = EvalReport(
        dataset=dataset,
        index_kind=index.kind,
        k=config.k,
        trim_enabled=config.trim_enabled,
    )
    items: list[ItemResult] = []
    errors: list[str] = []
    seen_ids: set[str] = set()
    for i, item in enumerate(qa):
        try:
            qvec = embed_text(config.embedder, item.question)
            result = index.search(qvec, config.k)
            if config.trim_enabled and not cache.has_similar(qvec):
                q_sent = Sentence(
                    id=f"query-{i}",
                    text=item.question,
                    components=item.components,
                    embedding=qvec,
                )
                seen_ids.update(result.ids)
                verdicts, consistent, _ = judge_contexts(
                    q_sent, result, by_id, config.rules, config.judge, store,
                    config.pairing,
                )
                report.judge_calls += len(verdicts)
                kept = set(consistent)
                docs = [by_id[sid].text for sid, _ in result.hits if sid in kept]
                cache.add(item.question, qvec)
            else:
                if config.trim_enabled:
                    report.skipped += 1
                docs = [by_id[sid].text for sid, _ in result.hits]
            question = item.question
            if config.rewrite_enabled and docs:
                question = rewrite_query(item.question, docs[0])
            prompt = build_answer_prompt(docs, question, item.task_instruction)
            generation = generator.generate(prompt, config.max_new_tokens, docs)
            ok = rough_match(generation, item.answers)
        except CditError as e:
            errors.append(f"item {i}: {type(e).__name__}: {e}")
            items.append(ItemResult(item.question, False, f"{type(e).__name__}: {e}"))
            continue
        items.append(ItemResult(item.question, ok))
        if ok:
            report.correct += 1
    if config.trim_enabled:
        report.cut_pairs = apply_threshold_cuts(index, store, seen_ids)
    report.total = len(items)
    report.accuracy = report.correct / report.total if report.total else 0.0
    report.errors = tuple(errors)
    report.items = tuple(items)
    return report


# Benchmark corpus generation ------------------------------------------------

_SUBJECT_STEMS = (
    "mara", "joren", "talia", "bren", "sefa", "rollo",
    "nadia", "piotr", "quin", "verna", "hollis", "zeno",
)

_OBJECT_STEMS = (
    "valve", "beacon", "ledger", "crate", "antenna", "turbine",
    "gate", "pump", "reactor", "hatch", "conveyor", "lantern",
)

_WITNESS_LEADS = ("did", "maybe", "surely")


def make_conflict_corpus(
    n_pairs: int, seed: int, lexicon: Lexicon | None = None
) -> tuple[list[Sentence], list[Sentence], list[QAItem]]:
    """Generate a corpus of conflicting twins plus query material.

    Every pair i contributes a base sentence "SUBJ PRED the OBJ." and a twin
    whose predicate is the lexicon antonym. The twin's id sorts before the
    base id on purpose: an exact distance tie then ranks the conflicting
    context first, reproducing the failure the trimming exists to fix.
    Three witness queries per pair side with the base twin; the eval item
    avoids predicate words entirely so the twins tie, and its gold answer
    only appears in the base twin's text.
    """
    if n_pairs < 1:
        raise EmptyInput("n_pairs must be >= 1")
    lex = DEFAULT_LEXICON if lexicon is None else lexicon
    if not lex.antonym_pairs:
        raise NeedAntonyms("lexicon has no antonym pairs")
    rng = random.Random(seed)
    corpus: list[Sentence] = []
    witnesses: list[Sentence] = []
    eval_items: list[QAItem] = []
    for i in range(n_pairs):
        sub = f"{rng.choice(_SUBJECT_STEMS)}{i}"
        obj = f"{rng.choice(_OBJECT_STEMS)}{i}"
        pred, anti = lex.antonym_pairs[i % len(lex.antonym_pairs)]
        base_comp = Components(sub=sub, pre=pred, obj=obj)
        corpus.append(
            Sentence(
                id=f"p{i:04d}-true",
                text=f"{sub} {pred} the {obj}.",
                components=base_comp,
            )
        )
        corpus.append(
            Sentence(
                id=f"p{i:04d}-anti",
                text=f"{sub} {anti} the {obj}.",
                components=Components(sub=sub, pre=anti, obj=obj),
            )
        )
        for j, lead in enumerate(_WITNESS_LEADS):
            witnesses.append(
                Sentence(
                    id=f"w{i:04d}-{j}",
                    text=f"{lead} {sub} {pred} the {obj}",
                    components=base_comp,
                )
            )
        eval_items.append(
            QAItem(
                question=f"what did {sub} do to the {obj} q{i:04d}",
                answers=(f"{pred} the {obj}",),
                components=Components(sub=sub, pre=pred, obj=obj),
            )
        )
    return corpus, witnesses, eval_items


def witness_qa_items(witnesses: Sequence[Sentence]) -> list[QAItem]:
    """Wrap witness queries as pipeline items; the gold is the predicate
    phrase plus object of the twin they side with."""
    items = []
    for w in witnesses:
        if w.components is None or w.components.pre is None or w.components.obj is None:
            raise EmptyInput(f"witness {w.id!r} lacks predicate/object components")
        items.append(
            QAItem(
                question=w.text,
                answers=(f"{w.components.pre} the {w.components.obj}",),
                components=w.components,
            )
        )
    return items
