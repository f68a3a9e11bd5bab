from __future__ import annotations

import numpy as np
import pytest
from conftest import make_corpus, unit_rows

from cdit.errors import MalformedRecord, NlistExceedsCorpus
from cdit.index import IndexConfig, IvfParams, KIND_FLAT, KIND_IVF, build
from cdit.model import Sentence


def ivf_index(corpus, dim, nlist, nprobe, seed=0):
    cfg = IndexConfig(
        kind=KIND_IVF,
        dim=dim,
        seed=seed,
        ivf=IvfParams(nlist=nlist, nprobe=nprobe, seed=seed),
    )
    return build(cfg, corpus)


class TestIvfParams:
    def test_nprobe_bounded_by_nlist(self):
        with pytest.raises(MalformedRecord):
            IvfParams(nlist=2, nprobe=3)

    def test_positive_fields(self):
        with pytest.raises(MalformedRecord):
            IvfParams(nlist=0)
        with pytest.raises(MalformedRecord):
            IvfParams(nlist=1, nprobe=1, kmeans_iters=0)


class TestIvfSearch:
    def test_full_probe_equals_flat_exactly(self):
        rng = np.random.default_rng(202)
        for trial in range(20):
            n = int(rng.integers(6, 96))
            d = int(rng.choice([4, 8, 16]))
            corpus = make_corpus(rng, n, d, dup_fraction=0.15)
            nlist = int(rng.integers(1, min(9, n + 1)))
            flat = build(IndexConfig(kind=KIND_FLAT, dim=d, seed=1), corpus)
            ivf = ivf_index(corpus, d, nlist=nlist, nprobe=nlist, seed=trial)
            for _ in range(6):
                q = unit_rows(rng, 1, d)[0]
                k = int(rng.integers(1, 10))
                assert ivf.search(q, k).hits == flat.search(q, k).hits

    def test_partial_probe_subset_of_flat(self):
        rng = np.random.default_rng(203)
        corpus = make_corpus(rng, 60, 8)
        flat = build(IndexConfig(kind=KIND_FLAT, dim=8, seed=1), corpus)
        ivf = ivf_index(corpus, 8, nlist=6, nprobe=2)
        for _ in range(10):
            q = unit_rows(rng, 1, 8)[0]
            got = ivf.search(q, 5)
            all_ids = set(flat.search(q, 60).ids)
            assert set(got.ids) <= all_ids
            dists = [d for _, d in got.hits]
            assert dists == sorted(dists)

    def test_nlist_exceeding_corpus_rejected(self):
        rng = np.random.default_rng(204)
        corpus = make_corpus(rng, 3, 4)
        with pytest.raises(NlistExceedsCorpus):
            ivf_index(corpus, 4, nlist=4, nprobe=1)

    def test_nlist_exceeding_distinct_vectors_rejected(self):
        v = unit_rows(np.random.default_rng(1), 1, 4)[0]
        corpus = [Sentence(id=f"s{i}", text="t", embedding=v.copy()) for i in range(5)]
        with pytest.raises(NlistExceedsCorpus):
            ivf_index(corpus, 4, nlist=2, nprobe=1)

    def test_duplicate_heavy_corpus_still_exact(self):
        # duplicates force exact ties and can empty clusters during Lloyd
        # iterations; full-probe search must still equal flat search.
        rng = np.random.default_rng(205)
        base = unit_rows(rng, 4, 8)
        rows = [base[i % 4].copy() for i in range(24)]
        corpus = [
            Sentence(id=f"s{i:03d}", text="t", embedding=rows[i]) for i in range(24)
        ]
        flat = build(IndexConfig(kind=KIND_FLAT, dim=8, seed=1), corpus)
        ivf = ivf_index(corpus, 8, nlist=4, nprobe=4)
        for i in range(8):
            q = unit_rows(rng, 1, 8)[0]
            assert ivf.search(q, 6).hits == flat.search(q, 6).hits

    def test_same_seed_reproducible(self):
        rng = np.random.default_rng(206)
        corpus = make_corpus(rng, 40, 8)
        a = ivf_index(corpus, 8, nlist=5, nprobe=5, seed=9)
        b = ivf_index(corpus, 8, nlist=5, nprobe=5, seed=9)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, b.assignments)

    def test_centroids_are_float32(self):
        rng = np.random.default_rng(207)
        corpus = make_corpus(rng, 20, 4)
        ivf = ivf_index(corpus, 4, nlist=3, nprobe=3)
        assert ivf.centroids.dtype == np.float32
        assert ivf.assignments.dtype == np.uint32


class TestIvfCuts:
    def test_cut_partner_of_top1_dropped(self):
        rng = np.random.default_rng(208)
        corpus = make_corpus(rng, 30, 8)
        ivf = ivf_index(corpus, 8, nlist=3, nprobe=3)
        q = corpus[0].embedding
        before = ivf.search(q, 4)
        ivf.cut(before.ids[0], before.ids[1])
        after = ivf.search(q, 4)
        assert after.ids[0] == before.ids[0]
        assert before.ids[1] not in after.ids
