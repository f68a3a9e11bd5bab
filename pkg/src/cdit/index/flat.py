"""Exhaustive squared-L2 index."""
from __future__ import annotations

import numpy as np

from .base import KIND_FLAT, BaseIndex, CutSet, IndexConfig, SearchResult


class FlatIndex(BaseIndex):
    kind = KIND_FLAT

    @classmethod
    def build(cls, config: IndexConfig, corpus) -> "FlatIndex":
        ids, matrix = cls._corpus_matrix(config, corpus)
        return cls(config, ids, matrix)

    def search(self, q, k: int, cuts: CutSet | None = None) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        qv = self._query_vector(q)
        if cuts is None:
            cuts = self.cuts
        rows = np.arange(len(self.ids))
        return self._rank_candidates(rows, qv, k, cuts)
