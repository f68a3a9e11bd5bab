"""Shared machinery for the three index kinds.

All indexes rank by squared L2 distance with ties broken by ascending
sentence id, hold a :class:`CutSet` of severed pairs, and share the
flat-scan candidate ranking used by the flat and IVF kinds.

Concurrency: searches may run concurrently; build/cut/load require exclusive
access, which the caller must arrange (the CLI uses file locks).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyIndex,
    MalformedRecord,
    UnknownId,
)
from ..model import PairKey, Sentence, make_pair_key

KIND_FLAT = "flat-l2"
KIND_IVF = "ivf-flat"
KIND_HNSW = "hnsw-flat"

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 64

    def __post_init__(self):
        if self.M < 2:
            raise MalformedRecord("hnsw M must be >= 2")
        if self.ef_construction < self.M:
            raise MalformedRecord("hnsw ef_construction must be >= M")
        if self.ef_search < 1:
            raise MalformedRecord("hnsw ef_search must be >= 1")


@dataclass(frozen=True)
class IvfParams:
    nlist: int = 1
    nprobe: int = 1
    kmeans_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.nlist < 1:
            raise MalformedRecord("ivf nlist must be >= 1")
        if not 1 <= self.nprobe <= self.nlist:
            raise MalformedRecord("ivf nprobe must be in [1, nlist]")
        if self.kmeans_iters < 1:
            raise MalformedRecord("ivf kmeans_iters must be >= 1")
        object.__setattr__(self, "seed", self.seed & _U64)


@dataclass(frozen=True)
class IndexConfig:
    """Build and search parameters for one index.

    ``seed`` drives HNSW level sampling; the IVF k-means seed lives in
    ``ivf``. Seeds are normalized to unsigned 64-bit values.
    """

    kind: str
    dim: int
    seed: int = 0
    hnsw: HnswParams = field(default_factory=HnswParams)
    ivf: IvfParams = field(default_factory=IvfParams)

    def __post_init__(self):
        if self.kind not in (KIND_FLAT, KIND_IVF, KIND_HNSW):
            raise MalformedRecord(f"unknown index kind: {self.kind!r}")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise MalformedRecord("index dim must be a positive integer")
        object.__setattr__(self, "seed", self.seed & _U64)


class CutSet:
    """Set of unordered id pairs whose similarity link has been severed."""

    def __init__(self, pairs: Iterable[PairKey] = ()):
        self._pairs: set[PairKey] = set()
        for p in pairs:
            if not isinstance(p, PairKey):
                raise MalformedRecord(f"not a PairKey: {p!r}")
            self._pairs.add(p)

    def add(self, a: str, b: str) -> PairKey:
        key = make_pair_key(a, b)
        self._pairs.add(key)
        return key

    def contains(self, a: str, b: str) -> bool:
        return a != b and make_pair_key(a, b) in self._pairs

    def __contains__(self, key: PairKey) -> bool:
        return key in self._pairs

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self) -> Iterator[PairKey]:
        return iter(sorted(self._pairs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CutSet):
            return NotImplemented
        return self._pairs == other._pairs

    def copy(self) -> "CutSet":
        return CutSet(self._pairs)


@dataclass(frozen=True)
class SearchResult:
    """Ranked (sentence id, squared L2 distance) hits, ascending by
    (distance, id)."""

    hits: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(h[0] for h in self.hits)

    def __len__(self) -> int:
        return len(self.hits)


def sq_dists(rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise squared L2 distances in float64."""
    diff = rows.astype(np.float64) - q.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff)


class BaseIndex:
    kind: str = ""

    def __init__(self, config: IndexConfig, ids: list[str], matrix: np.ndarray):
        self.config = config
        self.ids = list(ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.row_of = {sid: i for i, sid in enumerate(self.ids)}
        self.cuts = CutSet()
        self._x64 = self.matrix.astype(np.float64)

    @staticmethod
    def _corpus_matrix(config: IndexConfig, corpus: Sequence[Sentence]):
        if not corpus:
            raise EmptyCorpus("cannot build an index from an empty corpus")
        ids = []
        rows = []
        for s in corpus:
            if s.embedding is None:
                raise DimensionMismatch(f"sentence {s.id!r} has no embedding")
            if s.embedding.shape[0] != config.dim:
                raise DimensionMismatch(
                    f"sentence {s.id!r} embedding width {s.embedding.shape[0]} != dim {config.dim}"
                )
            ids.append(s.id)
            rows.append(s.embedding)
        return ids, np.stack(rows)

    def _query_vector(self, q) -> np.ndarray:
        arr = np.asarray(q, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.config.dim:
            raise DimensionMismatch(
                f"query has shape {arr.shape}, index dim is {self.config.dim}"
            )
        if len(self.ids) == 0:
            raise EmptyIndex("index holds no vectors")
        return arr

    def cut(self, a: str, b: str) -> CutSet:
        """Sever the pair (a, b); idempotent. Returns the updated CutSet."""
        for sid in (a, b):
            if sid not in self.row_of:
                raise UnknownId(sid)
        key = self.cuts.add(a, b)
        self._on_cut(key)
        return self.cuts

    def _on_cut(self, key: PairKey) -> None:
        pass

    def _rank_candidates(
        self, rows: np.ndarray, q: np.ndarray, k: int, cuts: CutSet
    ) -> SearchResult:
        """Rank candidate rows by (distance, id), drop cut partners of the
        top-ranked candidate, return the top k."""
        if len(rows) == 0:
            return SearchResult(())
        dists = sq_dists(self._x64[rows], q)
        order = np.lexsort((np.array([self.ids[r] for r in rows]), dists))
        ranked = [(float(dists[j]), self.ids[rows[j]]) for j in order]
        top_id = ranked[0][1]
        hits = []
        for dist, sid in ranked:
            if sid != top_id and cuts.contains(top_id, sid):
                continue
            hits.append((sid, dist))
            if len(hits) == k:
                break
        return SearchResult(tuple(hits))

    def search(self, q, k: int, cuts: CutSet | None = None) -> SearchResult:
        raise NotImplementedError
