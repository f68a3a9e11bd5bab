from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdit.errors import MalformedRecord
from cdit.model import Components
from cdit.rules import (
    DEFAULT_LEXICON,
    PHI1,
    PHI2,
    RULES_BY_NAME,
    WILDCARD_PHRASES,
    CMDRule,
    Lexicon,
    compare_components,
    load_lexicon,
    save_lexicon,
)

LEX = Lexicon(
    synonym_sets=[["turn on", "switch on"], ["begin", "commence"]],
    antonym_pairs=[("turn on", "turn off"), ("open", "close")],
)


class TestCMDRule:
    def test_shipped_rules(self):
        assert PHI1.name == "phi1" and PHI1.requires == ("sub", "pre", "obj")
        assert PHI2.name == "phi2" and PHI2.requires == ("att", "adv")
        assert RULES_BY_NAME == {"phi1": PHI1, "phi2": PHI2}

    def test_requires_must_be_component_fields(self):
        with pytest.raises(MalformedRecord):
            CMDRule(name="x", requires=("verb",))


class TestLexiconValidation:
    def test_synonym_set_needs_two_phrases(self):
        with pytest.raises(MalformedRecord):
            Lexicon(synonym_sets=[["alone"]])

    def test_phrase_in_one_set_only(self):
        with pytest.raises(MalformedRecord):
            Lexicon(synonym_sets=[["a", "b"], ["b", "c"]])

    def test_antonyms_cannot_share_a_set(self):
        with pytest.raises(MalformedRecord):
            Lexicon(synonym_sets=[["a", "b"]], antonym_pairs=[("a", "b")])

    def test_non_string_rejected(self):
        with pytest.raises(MalformedRecord):
            Lexicon(synonym_sets=[["a", 3]])
        with pytest.raises(MalformedRecord):
            Lexicon(antonym_pairs=[("a", 3)])

    def test_phrases_normalized(self):
        lex = Lexicon(synonym_sets=[["Turn  ON", "switch on"]])
        assert lex.are_synonyms("turn on", "switch on")


class TestCompareComponents:
    def c(self, **kw):
        return Components(**kw)

    def test_absent_side_is_similar(self):
        assert compare_components(self.c(), self.c(pre="run"), "pre", LEX)
        assert compare_components(self.c(pre="run"), self.c(), "pre", LEX)

    def test_wildcard_matches_anything(self):
        for w in ("who", "what", "where"):
            assert w in WILDCARD_PHRASES
            assert compare_components(self.c(sub=w), self.c(sub="jack"), "sub", LEX)

    def test_equal_is_similar(self):
        assert compare_components(self.c(obj="Radio"), self.c(obj="radio"), "obj", LEX)

    def test_antonym_is_dissimilar(self):
        assert not compare_components(
            self.c(pre="turn on"), self.c(pre="turn off"), "pre", LEX
        )

    def test_antonym_beats_synonym_lookup(self):
        # "turn on"/"turn off" are antonyms; "turn on"/"switch on" synonyms.
        assert compare_components(
            self.c(pre="turn on"), self.c(pre="switch on"), "pre", LEX
        )
        assert not compare_components(
            self.c(pre="turn off"), self.c(pre="turn on"), "pre", LEX
        )

    def test_unknown_pair_is_dissimilar(self):
        assert not compare_components(
            self.c(pre="jump"), self.c(pre="shout"), "pre", LEX
        )

    def test_unknown_field_rejected(self):
        with pytest.raises(MalformedRecord):
            compare_components(self.c(), self.c(), "verb", LEX)

    @given(
        st.sampled_from(
            ["turn on", "turn off", "switch on", "open", "close", "jump", "who", None]
        ),
        st.sampled_from(
            ["turn on", "turn off", "switch on", "open", "close", "jump", "who", None]
        ),
    )
    def test_symmetric(self, a, b):
        left = compare_components(self.c(pre=a), self.c(pre=b), "pre", LEX)
        right = compare_components(self.c(pre=b), self.c(pre=a), "pre", LEX)
        assert left == right

    @given(
        st.sampled_from(["turn on", "turn off", "switch on", "jump", None])
    )
    def test_reflexive(self, a):
        assert compare_components(self.c(pre=a), self.c(pre=a), "pre", LEX)


class TestDefaultLexicon:
    def test_ships_radio_antonyms(self):
        assert DEFAULT_LEXICON.are_antonyms("turn on", "turn off")
        assert DEFAULT_LEXICON.are_antonyms("open", "close")

    def test_ships_synonyms(self):
        assert DEFAULT_LEXICON.are_synonyms("turn on", "switch on")
        assert DEFAULT_LEXICON.are_synonyms("car", "automobile")

    def test_has_enough_antonyms_for_benchmarks(self):
        assert len(DEFAULT_LEXICON.antonym_pairs) >= 10


class TestLexiconIo:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "lex.jsonl"
        save_lexicon(LEX, path)
        loaded = load_lexicon(path)
        assert loaded.synonym_sets == LEX.synonym_sets
        assert loaded.antonym_pairs == LEX.antonym_pairs

    def test_bad_row_rejected(self, tmp_path):
        path = tmp_path / "lex.jsonl"
        path.write_text('{"syn": ["only"]}\n')
        with pytest.raises(MalformedRecord):
            load_lexicon(path)
