from __future__ import annotations

import numpy as np
import pytest
from conftest import brute_force_hits, make_corpus, unit_rows

from cdit.errors import DimensionMismatch, EmptyCorpus, UnknownId
from cdit.index import CutSet, IndexConfig, KIND_FLAT, build, cut, search
from cdit.model import Sentence


def flat_index(corpus, dim, seed=0):
    return build(IndexConfig(kind=KIND_FLAT, dim=dim, seed=seed), corpus)


class TestFlatSearch:
    def test_matches_brute_force_oracle_with_ties(self):
        rng = np.random.default_rng(101)
        for trial in range(25):
            n = int(rng.integers(4, 80))
            d = int(rng.choice([4, 8, 16]))
            corpus = make_corpus(rng, n, d, dup_fraction=0.2)
            index = flat_index(corpus, d)
            for _ in range(8):
                q = unit_rows(rng, 1, d)[0]
                k = int(rng.integers(1, 12))
                got = index.search(q, k)
                want = brute_force_hits(corpus, q, k)
                assert got.ids == tuple(sid for sid, _ in want)
                for (gs, gd), (ws, wd) in zip(got.hits, want):
                    assert gd == pytest.approx(wd, abs=1e-12)

    def test_exact_tie_breaks_ascending_id(self):
        v = unit_rows(np.random.default_rng(3), 1, 4)[0]
        corpus = [
            Sentence(id="z", text="z", embedding=v),
            Sentence(id="a", text="a", embedding=v.copy()),
            Sentence(id="m", text="m", embedding=v.copy()),
        ]
        index = flat_index(corpus, 4)
        assert index.search(v, 3).ids == ("a", "m", "z")

    def test_k_larger_than_corpus(self):
        rng = np.random.default_rng(5)
        corpus = make_corpus(rng, 6, 4)
        index = flat_index(corpus, 4)
        assert len(index.search(corpus[0].embedding, 50)) == 6

    def test_k_must_be_positive(self):
        rng = np.random.default_rng(5)
        corpus = make_corpus(rng, 4, 4)
        index = flat_index(corpus, 4)
        with pytest.raises(ValueError):
            index.search(corpus[0].embedding, 0)

    def test_query_width_checked(self):
        rng = np.random.default_rng(5)
        index = flat_index(make_corpus(rng, 4, 4), 4)
        with pytest.raises(DimensionMismatch):
            index.search(np.ones(3, dtype=np.float32), 1)

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            flat_index([], 4)

    def test_module_level_search_delegates(self):
        rng = np.random.default_rng(5)
        corpus = make_corpus(rng, 4, 4)
        index = flat_index(corpus, 4)
        q = corpus[0].embedding
        assert search(index, q, 2) == index.search(q, 2)


class TestFlatCuts:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.corpus = make_corpus(rng, 12, 8)
        self.index = flat_index(self.corpus, 8)

    def test_cut_partner_of_top1_dropped(self):
        q = self.corpus[0].embedding
        before = self.index.search(q, 5)
        top1, second = before.ids[0], before.ids[1]
        self.index.cut(top1, second)
        after = self.index.search(q, 5)
        assert after.ids[0] == top1
        assert second not in after.ids

    def test_top1_survives_its_own_cut(self):
        q = self.corpus[0].embedding
        top1 = self.index.search(q, 1).ids[0]
        other = next(s.id for s in self.corpus if s.id != top1)
        self.index.cut(top1, other)
        assert self.index.search(q, 1).ids[0] == top1

    def test_cut_matches_oracle(self):
        rng = np.random.default_rng(13)
        q = unit_rows(rng, 1, 8)[0]
        ids = self.index.search(q, 4).ids
        self.index.cut(ids[0], ids[2])
        self.index.cut(ids[0], ids[3])
        got = self.index.search(q, 6)
        want = brute_force_hits(self.corpus, q, 6, cuts=self.index.cuts)
        assert got.ids == tuple(sid for sid, _ in want)

    def test_ad_hoc_cutset_overrides_index_cuts(self):
        q = self.corpus[0].embedding
        before = self.index.search(q, 3)
        adhoc = CutSet()
        adhoc.add(before.ids[0], before.ids[1])
        got = self.index.search(q, 3, cuts=adhoc)
        assert before.ids[1] not in got.ids
        assert list(self.index.cuts) == []

    def test_cut_unknown_id(self):
        with pytest.raises(UnknownId):
            self.index.cut(self.corpus[0].id, "missing")

    def test_module_level_cut_delegates(self):
        a, b = self.corpus[0].id, self.corpus[1].id
        cut(self.index, a, b)
        assert self.index.cuts.contains(a, b)

    def test_cuts_only_affect_pairs_with_top1(self):
        q = self.corpus[0].embedding
        before = self.index.search(q, 5)
        second, third = before.ids[1], before.ids[2]
        self.index.cut(second, third)
        after = self.index.search(q, 5)
        assert after.ids == before.ids
