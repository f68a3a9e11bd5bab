"""Hierarchical navigable small world graph index.

Conventional construction: node levels are sampled as floor(-ln(U) * mL)
with mL = 1/ln(M) from a generator seeded by the index config; neighbor
lists are chosen with the distance-based pruning heuristic; layer-0 lists
are capped at 2*M, upper layers at M; the entry point is the highest-level
node, earliest inserted on ties.

Cutting a pair removes the edge from both adjacency lists at every layer,
and searches refuse to traverse any edge whose pair is in the cut set, so a
cut made on a loaded index takes effect even where adjacency lists were
asymmetric. Search results are the top-k of every node visited during the
descent and the layer-0 beam.
"""
from __future__ import annotations

import heapq
import math
import random
from bisect import insort

import numpy as np

from ..model import PairKey
from .base import KIND_HNSW, BaseIndex, CutSet, IndexConfig, SearchResult, sq_dists

_MAX_LEVEL = 64


class HNSWIndex(BaseIndex):
    kind = KIND_HNSW

    def __init__(self, config, ids, matrix, levels, adjacency, entry_row):
        super().__init__(config, ids, matrix)
        self.levels: list[int] = list(levels)
        # adjacency[row][layer] is a sorted list of neighbor rows
        self.adjacency: list[list[list[int]]] = adjacency
        self.entry_row: int = entry_row

    @classmethod
    def build(cls, config: IndexConfig, corpus) -> "HNSWIndex":
        ids, matrix = cls._corpus_matrix(config, corpus)
        index = cls(config, ids, matrix, [], [], -1)
        rng = random.Random(config.seed)
        m_l = 1.0 / math.log(config.hnsw.M)
        for row in range(len(ids)):
            u = rng.random()
            level = _MAX_LEVEL if u <= 0.0 else min(_MAX_LEVEL, int(-math.log(u) * m_l))
            index._insert(row, level)
        return index

    def _dist(self, a: int, b: int) -> float:
        diff = self._x64[a] - self._x64[b]
        return float(diff @ diff)

    def _insert(self, row: int, level: int) -> None:
        self.levels.append(level)
        self.adjacency.append([[] for _ in range(level + 1)])
        if self.entry_row < 0:
            self.entry_row = row
            return
        q = self._x64[row]
        top = self.levels[self.entry_row]
        eps = [self.entry_row]
        cache: dict[int, float] = {}
        for layer in range(top, level, -1):
            eps = self._search_layer(q, eps, 1, layer, self.cuts, None, cache)[:1]
        m = self.config.hnsw.M
        for layer in range(min(top, level), -1, -1):
            found = self._search_layer(
                q, eps, self.config.hnsw.ef_construction, layer, self.cuts, None, cache
            )
            neighbors = self._select_neighbors(
                row, [(cache[r], r) for r in found], m, cache
            )
            cap = 2 * m if layer == 0 else m
            for nb in neighbors:
                self._link(row, nb, layer, cap)
            eps = found
        if level > top:
            self.entry_row = row

    def _select_neighbors(
        self,
        center: int,
        candidates: list[tuple[float, int]],
        limit: int,
        cache: dict[int, float] | None = None,
    ) -> list[int]:
        """Pruning heuristic: scan candidates nearest-first and keep one only
        if it is at least as close to the center as to every kept node."""
        selected: list[int] = []
        for d_cq, cand in sorted(candidates):
            if len(selected) == limit:
                break
            if cand == center:
                continue
            if selected:
                d_cs = sq_dists(self._x64[selected], self._x64[cand])
                if float(d_cs.min()) < d_cq:
                    continue
            selected.append(cand)
        return selected

    def _link(self, a: int, b: int, layer: int, cap: int) -> None:
        for src, dst in ((a, b), (b, a)):
            if self.cuts.contains(self.ids[src], self.ids[dst]):
                continue
            lst = self.adjacency[src][layer]
            if dst in lst:
                continue
            if len(lst) < cap:
                insort(lst, dst)
            else:
                candidates = [(self._dist(src, r), r) for r in lst + [dst]]
                keep = self._select_neighbors(src, candidates, cap)
                self.adjacency[src][layer] = sorted(keep)

    def _neighbors(self, row: int, layer: int) -> list[int]:
        layers = self.adjacency[row]
        return layers[layer] if layer < len(layers) else []

    def _search_layer(
        self,
        q: np.ndarray,
        eps: list[int],
        ef: int,
        layer: int,
        cuts: CutSet,
        log: list | None,
        cache: dict[int, float],
    ) -> list[int]:
        """Beam search on one layer; returns up to ef rows sorted by
        (distance, row). Never follows an edge whose pair is cut; every edge
        actually followed is appended to ``log`` when given."""
        fresh = [r for r in eps if r not in cache]
        if fresh:
            for r, d in zip(fresh, sq_dists(self._x64[fresh], q)):
                cache[r] = float(d)
        visited = set(eps)
        candidates = [(cache[r], r) for r in eps]
        heapq.heapify(candidates)
        beam = [(-cache[r], r) for r in eps]
        heapq.heapify(beam)
        while len(beam) > ef:
            heapq.heappop(beam)
        while candidates:
            d_c, c = heapq.heappop(candidates)
            if len(beam) == ef and d_c > -beam[0][0]:
                break
            walkable = []
            for v in self._neighbors(c, layer):
                if cuts.contains(self.ids[c], self.ids[v]):
                    continue
                if log is not None:
                    log.append((self.ids[c], self.ids[v]))
                if v not in visited:
                    walkable.append(v)
            if not walkable:
                continue
            dists = sq_dists(self._x64[walkable], q)
            for v, d_v in zip(walkable, dists):
                visited.add(v)
                d_v = float(d_v)
                cache[v] = d_v
                if len(beam) < ef or d_v < -beam[0][0]:
                    heapq.heappush(candidates, (d_v, v))
                    heapq.heappush(beam, (-d_v, v))
                    if len(beam) > ef:
                        heapq.heappop(beam)
        return [r for _, r in sorted((-nd, r) for nd, r in beam)]

    def search(
        self,
        q,
        k: int,
        cuts: CutSet | None = None,
        traversal_log: list | None = None,
    ) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        qv = self._query_vector(q)
        if cuts is None:
            cuts = self.cuts
        cache: dict[int, float] = {}
        eps = [self.entry_row]
        for layer in range(self.levels[self.entry_row], 0, -1):
            eps = self._search_layer(qv, eps, 1, layer, cuts, traversal_log, cache)[:1]
        self._search_layer(
            qv, eps, self.config.hnsw.ef_search, 0, cuts, traversal_log, cache
        )
        ranked = sorted((d, self.ids[r]) for r, d in cache.items())
        return SearchResult(tuple((sid, d) for d, sid in ranked[:k]))

    def _on_cut(self, key: PairKey) -> None:
        a = self.row_of[key.lo]
        b = self.row_of[key.hi]
        for src, dst in ((a, b), (b, a)):
            for lst in self.adjacency[src]:
                if dst in lst:
                    lst.remove(dst)
