"""Witness accumulation, the query-cache determiner, and the trim run.

A query that retrieves context s1 and is judged consistent with s1 but
inconsistent with s2 is one witness for separating the pair (s1, s2). Once a
pair gathers ``threshold`` witnesses, its similarity link is cut in the
index. The determiner skips judging for queries whose embedding is close to
an already-processed query.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    CditError,
    DimensionMismatch,
    IoError,
    MalformedRecord,
    SelfWitness,
    TrimAborted,
    UnknownId,
)
from .judge import judge_consistency
from .model import PairKey, make_pair_key

DEFAULT_THRESHOLD = 3
DEFAULT_SIM_THRESHOLD = 0.9


class WitnessStore:
    """Per-pair witness counts plus the cut threshold W."""

    def __init__(self, threshold: int = DEFAULT_THRESHOLD):
        if not isinstance(threshold, int) or threshold < 1:
            raise MalformedRecord("witness threshold must be a positive integer")
        self.threshold = threshold
        self.counts: dict[PairKey, int] = {}

    def increment(self, key: PairKey) -> int:
        new = self.counts.get(key, 0) + 1
        self.counts[key] = new
        return new

    def __eq__(self, other) -> bool:
        if not isinstance(other, WitnessStore):
            return NotImplemented
        return self.threshold == other.threshold and self.counts == other.counts


class QueryCache:
    """Embeddings of already-processed queries, with similarity threshold."""

    def __init__(self, sim_threshold: float = DEFAULT_SIM_THRESHOLD):
        if not 0.0 < sim_threshold <= 1.0:
            raise MalformedRecord("sim_threshold must be in (0, 1]")
        self.sim_threshold = float(sim_threshold)
        self.entries: list[tuple[str, np.ndarray]] = []

    def add(self, text: str, vector: np.ndarray) -> None:
        self.entries.append((text, np.asarray(vector, dtype=np.float32)))

    def has_similar(self, q_vector: np.ndarray) -> bool:
        if not self.entries:
            return False
        q = np.asarray(q_vector, dtype=np.float64)
        stacked = np.stack([v for _, v in self.entries]).astype(np.float64)
        if stacked.shape[1] != q.shape[0]:
            raise DimensionMismatch(
                f"cached vectors are {stacked.shape[1]}-wide, query is {q.shape[0]}"
            )
        return bool(np.max(stacked @ q) >= self.sim_threshold)


def has_similar_query(cache: QueryCache, q_vector) -> bool:
    """True iff some cached query has cosine similarity >= the threshold."""
    return cache.has_similar(q_vector)


def accumulate_witness(store: WitnessStore, s: str, t_ids) -> WitnessStore:
    """Record one witness against pairing s with each consistent context."""
    t_list = list(t_ids)
    if s in t_list:
        raise SelfWitness(s)
    for t in t_list:
        store.increment(make_pair_key(s, t))
    return store


def judge_contexts(q, result, by_id, rules, judge, store, pairing):
    """Judge retrieved contexts in rank order and accumulate witnesses.

    Returns (verdicts in rank order, consistent ids in rank order, number of
    witness increments). In "as-written" mode an inconsistent context pairs
    only with consistent contexts that preceded it; in "post-hoc" mode it
    pairs with every consistent context of the query.
    """
    verdicts: list[tuple[str, bool]] = []
    consistent: list[str] = []
    increments = 0
    for sid, _ in result.hits:
        if sid not in by_id:
            raise UnknownId(sid)
        judgement = judge_consistency(q, by_id[sid], rules, judge)
        verdicts.append((sid, judgement.consistent))
        if judgement.consistent:
            consistent.append(sid)
        elif pairing == "as-written":
            accumulate_witness(store, sid, consistent)
            increments += len(consistent)
    if pairing == "post-hoc":
        for sid, ok in verdicts:
            if not ok:
                accumulate_witness(store, sid, consistent)
                increments += len(consistent)
    return verdicts, consistent, increments


def apply_threshold_cuts(index, store: WitnessStore, seen_ids) -> tuple[PairKey, ...]:
    """Cut every pair retrieved this run whose witness count reached W."""
    to_cut = sorted(
        key
        for key, count in store.counts.items()
        if count >= store.threshold and key.lo in seen_ids and key.hi in seen_ids
    )
    for key in to_cut:
        index.cut(key.lo, key.hi)
    return tuple(to_cut)


@dataclass
class TrimReport:
    judged: int = 0
    consistent: int = 0
    inconsistent: int = 0
    witness_increments: int = 0
    skipped: int = 0
    cut_pairs: tuple[PairKey, ...] = ()

    def to_dict(self) -> dict:
        return {
            "judged": self.judged,
            "consistent": self.consistent,
            "inconsistent": self.inconsistent,
            "witness_increments": self.witness_increments,
            "skipped": self.skipped,
            "cut_pairs": [[p.lo, p.hi] for p in self.cut_pairs],
        }


def run_trim(
    index,
    corpus,
    queries,
    rules,
    judge,
    store: WitnessStore,
    cache: QueryCache,
    k: int,
    pairing: str = "as-written",
):
    """Trim the index against a stream of queries.

    Per query: skip everything if the determiner has seen a similar query;
    otherwise retrieve top-k under the current cuts, judge each context in
    rank order, keep consistent ones in T and count a witness for
    (inconsistent s, each t in T). With ``pairing="as-written"`` T is the
    set gathered so far when s is judged; with ``"post-hoc"`` every
    inconsistent context pairs with every consistent one regardless of rank
    order. After the whole stream, every pair retrieved this run whose count
    reached the threshold is cut.

    A judge or index failure aborts the run with the offending query id; the
    report accumulated so far travels on the exception.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if pairing not in ("as-written", "post-hoc"):
        raise MalformedRecord(f"unknown pairing mode: {pairing!r}")
    by_id = {s.id: s for s in corpus}
    report = TrimReport()
    seen_ids: set[str] = set()
    for q in queries:
        try:
            if q.embedding is None:
                raise DimensionMismatch(f"query {q.id!r} has no embedding")
            if cache.has_similar(q.embedding):
                report.skipped += 1
                continue
            result = index.search(q.embedding, k)
            seen_ids.update(result.ids)
            verdicts, consistent, increments = judge_contexts(
                q, result, by_id, rules, judge, store, pairing
            )
            report.judged += len(verdicts)
            report.consistent += len(consistent)
            report.inconsistent += len(verdicts) - len(consistent)
            report.witness_increments += increments
            cache.add(q.text, q.embedding)
        except CditError as e:
            raise TrimAborted(q.id, report, e) from e
    report.cut_pairs = apply_threshold_cuts(index, store, seen_ids)
    return index, report


def load_witness_store(path, threshold: int = DEFAULT_THRESHOLD) -> WitnessStore:
    """Read a witness-store JSONL file of {"lo", "hi", "count"} rows."""
    store = WitnessStore(threshold)
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
        if not isinstance(obj, dict) or set(obj) != {"lo", "hi", "count"}:
            raise MalformedRecord("row must be {'lo', 'hi', 'count'}", line=lineno)
        if not isinstance(obj["count"], int) or obj["count"] < 1:
            raise MalformedRecord("count must be a positive integer", line=lineno)
        try:
            key = make_pair_key(obj["lo"], obj["hi"])
        except CditError as e:
            raise MalformedRecord(str(e), line=lineno) from e
        if key in store.counts:
            raise MalformedRecord(f"duplicate pair {key.lo}/{key.hi}", line=lineno)
        store.counts[key] = obj["count"]
    return store


def save_witness_store(store: WitnessStore, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(store.counts):
                fh.write(
                    json.dumps({"lo": key.lo, "hi": key.hi, "count": store.counts[key]})
                    + "\n"
                )
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_query_cache(path, sim_threshold: float = DEFAULT_SIM_THRESHOLD) -> QueryCache:
    """Read a cache JSONL file of {"text", "vector"} rows."""
    cache = QueryCache(sim_threshold)
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
        if not isinstance(obj, dict) or set(obj) != {"text", "vector"}:
            raise MalformedRecord("row must be {'text', 'vector'}", line=lineno)
        try:
            vec = np.asarray(obj["vector"], dtype=np.float32)
        except (TypeError, ValueError) as e:
            raise MalformedRecord(f"bad vector: {e}", line=lineno)
        if vec.ndim != 1 or vec.size == 0:
            raise MalformedRecord("vector must be a non-empty flat list", line=lineno)
        cache.add(obj["text"], vec)
    return cache


def save_query_cache(cache: QueryCache, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for text, vec in cache.entries:
                fh.write(
                    json.dumps({"text": text, "vector": [float(v) for v in vec]}) + "\n"
                )
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
