"""Inverted-file index: seeded k-means coarse quantizer, nprobe probing."""
from __future__ import annotations

import numpy as np

from ..errors import NlistExceedsCorpus
from .base import KIND_IVF, BaseIndex, CutSet, IndexConfig, SearchResult, sq_dists


def _kmeans(matrix: np.ndarray, nlist: int, iters: int, seed: int):
    """Deterministic Lloyd's iterations.

    Initial centroids are the first nlist distinct vectors under a seeded
    shuffle; an emptied cluster keeps its previous centroid. Centroids are
    quantized to float32 so a saved index probes identically after reload.
    """
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    centroids: list[np.ndarray] = []
    seen: set[bytes] = set()
    for row in perm:
        key = matrix[row].tobytes()
        if key in seen:
            continue
        seen.add(key)
        centroids.append(matrix[row])
        if len(centroids) == nlist:
            break
    if len(centroids) < nlist:
        raise NlistExceedsCorpus(
            f"nlist={nlist} exceeds the {len(centroids)} distinct vectors available"
        )
    cents = np.stack(centroids).astype(np.float32)
    x64 = matrix.astype(np.float64)
    assign = None
    for _ in range(iters):
        assign = _assign(x64, cents)
        new = cents.astype(np.float64).copy()
        for c in range(nlist):
            members = np.nonzero(assign == c)[0]
            if members.size:
                new[c] = x64[members].mean(axis=0)
        cents = new.astype(np.float32)
    assign = _assign(x64, cents)
    return cents, assign


def _assign(x64: np.ndarray, cents: np.ndarray) -> np.ndarray:
    c64 = cents.astype(np.float64)
    d2 = (
        np.einsum("ij,ij->i", x64, x64)[:, None]
        - 2.0 * x64 @ c64.T
        + np.einsum("ij,ij->i", c64, c64)[None, :]
    )
    return np.argmin(d2, axis=1)


class IVFFlatIndex(BaseIndex):
    kind = KIND_IVF

    def __init__(self, config, ids, matrix, centroids, assignments):
        super().__init__(config, ids, matrix)
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        self.assignments = np.ascontiguousarray(assignments, dtype=np.uint32)
        self._members = [
            np.nonzero(self.assignments == c)[0]
            for c in range(self.centroids.shape[0])
        ]

    @classmethod
    def build(cls, config: IndexConfig, corpus) -> "IVFFlatIndex":
        ids, matrix = cls._corpus_matrix(config, corpus)
        if config.ivf.nlist > len(ids):
            raise NlistExceedsCorpus(
                f"nlist={config.ivf.nlist} exceeds corpus size {len(ids)}"
            )
        centroids, assignments = _kmeans(
            matrix, config.ivf.nlist, config.ivf.kmeans_iters, config.ivf.seed
        )
        return cls(config, ids, matrix, centroids, assignments)

    def search(self, q, k: int, cuts: CutSet | None = None) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        qv = self._query_vector(q)
        if cuts is None:
            cuts = self.cuts
        cent_d = sq_dists(self.centroids.astype(np.float64), qv)
        order = np.lexsort((np.arange(cent_d.shape[0]), cent_d))
        probed = order[: self.config.ivf.nprobe]
        rows = np.concatenate([self._members[c] for c in probed])
        return self._rank_candidates(rows, qv, k, cuts)
