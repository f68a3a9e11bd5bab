"""Vector indexes: exhaustive, inverted-file and HNSW, all with cut support."""
from __future__ import annotations

from .base import (
    KIND_FLAT,
    KIND_HNSW,
    KIND_IVF,
    CutSet,
    HnswParams,
    IndexConfig,
    IvfParams,
    SearchResult,
)
from .flat import FlatIndex
from .hnsw import HNSWIndex
from .io import load, save
from .ivf import IVFFlatIndex

_BUILDERS = {
    KIND_FLAT: FlatIndex.build,
    KIND_IVF: IVFFlatIndex.build,
    KIND_HNSW: HNSWIndex.build,
}


def build(config: IndexConfig, corpus):
    """Build the index kind named by the config from an embedded corpus."""
    return _BUILDERS[config.kind](config, corpus)


def search(index, q, k: int, cuts: CutSet | None = None) -> SearchResult:
    """Search an index; cuts defaults to the index's own cut set."""
    return index.search(q, k, cuts)


def cut(index, a: str, b: str) -> CutSet:
    """Sever the similarity link between two ids."""
    return index.cut(a, b)


__all__ = [
    "KIND_FLAT",
    "KIND_HNSW",
    "KIND_IVF",
    "CutSet",
    "FlatIndex",
    "HNSWIndex",
    "HnswParams",
    "IVFFlatIndex",
    "IndexConfig",
    "IvfParams",
    "SearchResult",
    "build",
    "cut",
    "load",
    "save",
    "search",
]
