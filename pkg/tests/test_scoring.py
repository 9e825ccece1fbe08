import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mirc_lab.dataset import EmbeddingTable
from mirc_lab.scoring import (
    EmptyAfterCleaningError,
    MissingEmbeddingError,
    ScoringConfig,
    SpellCorrector,
    UndefinedAccuracyError,
    clean,
    combine_similarity,
    levenshtein,
    node_accuracy,
    score_response,
    semantic_score,
    split_terms,
    tokenize,
)


def brute_force_correct(token, freqs, max_d):
    """Independent oracle: scan the whole dictionary with its own DP."""

    def dist(a, b):
        dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
        for i in range(len(a) + 1):
            dp[i][0] = i
        for j in range(len(b) + 1):
            dp[0][j] = j
        for i in range(1, len(a) + 1):
            for j in range(1, len(b) + 1):
                dp[i][j] = min(
                    dp[i - 1][j] + 1,
                    dp[i][j - 1] + 1,
                    dp[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
                )
        return dp[-1][-1]

    if token in freqs:
        return token
    best = None
    for word, freq in freqs.items():
        d = dist(token, word)
        if d <= max_d:
            key = (d, -freq, word)
            if best is None or key < best:
                best = key
    return best[2] if best else token


@pytest.fixture(scope="module")
def dictionary_1k():
    rng = np.random.default_rng(2024)
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    words = {"close", "door", "fridge", "open", "wash", "pan", "cut", "bread"}
    while len(words) < 1000:
        n = int(rng.integers(3, 9))
        words.add("".join(alphabet[int(i)] for i in rng.integers(0, 26, n)))
    return {w: int(rng.integers(1, 1000)) for w in sorted(words)}


class TestClean:
    def test_articles_and_subjects_removed(self):
        config = ScoringConfig()
        cleaned, trace = clean("The man closes the fridge.", config)
        assert cleaned == "closes fridge"
        assert "man" in trace.removed and "the" in trace.removed

    def test_spell_correction(self):
        config = ScoringConfig()
        corrector = SpellCorrector({"close": 10, "door": 5}, 2)
        cleaned, trace = clean("clsoe door", config, corrector)
        assert cleaned == "close door"
        assert ("clsoe", "close") in trace.corrections

    def test_empty_after_cleaning(self):
        with pytest.raises(EmptyAfterCleaningError):
            clean("a the an", ScoringConfig())

    def test_blank_input_rejected(self):
        with pytest.raises(ValueError):
            clean("   ", ScoringConfig())

    def test_overlong_flagged_not_truncated(self):
        cleaned, trace = clean("quickly closes big metal fridge", ScoringConfig())
        assert cleaned == "quickly closes big metal fridge"
        assert "needs_manual_review" in trace.flags

    def test_idempotent_on_fuzz_corpus(self, dictionary_1k):
        config = ScoringConfig()
        corrector = SpellCorrector(dictionary_1k, 2)
        rng = np.random.default_rng(7)
        vocab = list(dictionary_1k) + ["the", "a", "person", "man", "clsoe", "xqzytk"]
        for _ in range(200):
            n = int(rng.integers(1, 6))
            text = " ".join(vocab[int(i)] for i in rng.integers(0, len(vocab), n))
            text = text + rng.choice([".", "!", "", " ?"])
            try:
                once, _ = clean(text, config, corrector)
            except EmptyAfterCleaningError:
                continue
            twice, _ = clean(once, config, corrector)
            assert twice == once

    def test_case_and_whitespace_invariance(self):
        config = ScoringConfig()
        a, _ = clean("Closes   Fridge", config)
        b, _ = clean("closes fridge", config)
        assert a == b

    def test_hyphenated_tokens_survive(self):
        assert tokenize("Turn-off the light!") == ["turn-off", "the", "light"]


class TestSpellCorrector:
    def test_agrees_with_brute_force_oracle(self, dictionary_1k):
        corrector = SpellCorrector(dictionary_1k, 2)
        rng = np.random.default_rng(99)
        alphabet = "abcdefghijklmnopqrstuvwxyz"
        words = sorted(dictionary_1k)
        tokens = []
        for _ in range(300):
            w = list(words[int(rng.integers(0, len(words)))])
            for _ in range(int(rng.integers(0, 3))):
                op = rng.integers(0, 3)
                pos = int(rng.integers(0, len(w))) if w else 0
                if op == 0 and w:
                    del w[pos]
                elif op == 1:
                    w.insert(pos, alphabet[int(rng.integers(0, 26))])
                elif w:
                    w[pos] = alphabet[int(rng.integers(0, 26))]
            if w:
                tokens.append("".join(w))
        for token in tokens:
            assert corrector.correct(token) == brute_force_correct(token, dictionary_1k, 2)

    def test_exact_word_untouched(self):
        corrector = SpellCorrector({"close": 1, "clone": 500}, 2)
        assert corrector.correct("close") == "close"

    def test_unfixable_token_unchanged(self):
        corrector = SpellCorrector({"close": 1}, 2)
        assert corrector.correct("zzzzzzzzzz") == "zzzzzzzzzz"

    def test_frequency_breaks_distance_ties(self):
        corrector = SpellCorrector({"cat": 5, "bat": 50}, 2)
        # "aat" is distance 1 from both; the more frequent word wins
        assert corrector.correct("aat") == "bat"

    def test_levenshtein_basics(self):
        assert levenshtein("", "abc") == 3
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("clsoe", "close") == 2


def one_hot_tables(texts):
    keys = sorted(set(texts))
    dim = len(keys)
    sent = {}
    words = {}
    for i, key in enumerate(keys):
        v = np.zeros(dim)
        v[i] = 1.0
        sent[key] = v
    tokens = sorted({t for key in keys for t in key.split()})
    for i, tok in enumerate(tokens):
        v = np.zeros(len(tokens))
        v[i] = 1.0
        words[tok] = v
    return EmbeddingTable(sent, "sentence"), EmbeddingTable(words, "word")


class TestSemanticScore:
    def test_identity_response_scores_one_when_p_equals_b(self):
        sent, words = one_hot_tables(["close fridge"])
        config = ScoringConfig(penalty_constant=0.4, bonus_constant=0.4)
        cs, cs_a, cs_o, s_sim, correct, _ = semantic_score(
            "close fridge", "close fridge", sent, words, config
        )
        assert cs == cs_a == cs_o == 1.0
        assert s_sim == pytest.approx(1.0, abs=1e-15)
        assert correct

    def test_orthogonal_response_scores_zero(self):
        sent, words = one_hot_tables(["close fridge", "dance floor"])
        config = ScoringConfig(penalty_constant=0.4, bonus_constant=0.4, correctness_threshold=0.1)
        cs, cs_a, cs_o, s_sim, correct, _ = semantic_score(
            "dance floor", "close fridge", sent, words, config
        )
        assert cs == cs_a == cs_o == 0.0
        assert s_sim == 0.0
        assert not correct

    def test_hand_arithmetic_case(self):
        # CS=0.8, CS_O=0.9, CS_A=0.7, p=0.5, b=0.6 -> 0.8 - 0.2025 + 0.1764
        config = ScoringConfig(penalty_constant=0.5, bonus_constant=0.6)
        assert combine_similarity(0.8, 0.9, 0.7, config) == pytest.approx(0.7739, abs=1e-12)

    def test_missing_embedding_raises(self):
        sent, words = one_hot_tables(["close fridge"])
        config = ScoringConfig()
        with pytest.raises(MissingEmbeddingError):
            semantic_score("open door", "close fridge", sent, words, config)

    def test_score_response_empty_cleaning_incorrect(self):
        sent, words = one_hot_tables(["close fridge"])
        scored = score_response(
            "p1", "n1", "the a an", "close fridge", sent, words, ScoringConfig()
        )
        assert not scored.correct
        assert "empty_after_cleaning" in scored.flags
        assert scored.s_sim is None

    @settings(max_examples=100, deadline=None)
    @given(
        cs=st.floats(-1, 1),
        cs_o=st.floats(0.01, 1),
        cs_a=st.floats(0.01, 1),
        bump=st.floats(0.001, 0.5),
    )
    def test_monotonicity_in_verb_and_object_terms(self, cs, cs_o, cs_a, bump):
        config = ScoringConfig(penalty_constant=0.7, bonus_constant=0.7)
        base = combine_similarity(cs, cs_o, cs_a, config)
        assert combine_similarity(cs, cs_o, min(cs_a + bump, 1.0), config) >= base
        assert combine_similarity(cs, min(cs_o + bump, 1.0), cs_a, config) <= base

    def test_threshold_range_validated(self):
        with pytest.raises(ValueError):
            ScoringConfig(penalty_constant=0.1, bonus_constant=0.1, correctness_threshold=2.0)


class TestSplitTerms:
    def test_lexicon_hit(self):
        verb, objects = split_terms(["big", "close", "fridge"], frozenset({"close"}))
        assert verb == "close"
        assert objects == ["big", "fridge"]

    def test_fallback_first_token(self):
        verb, objects = split_terms(["closes", "fridge"], frozenset({"close"}))
        assert verb == "closes"
        assert objects == ["fridge"]


class TestNodeAccuracy:
    def make_scored(self, flags):
        return [
            score_like
            for score_like in (
                type("S", (), {"correct": f})() for f in flags
            )
        ]

    def test_fig_worked_values(self):
        assert node_accuracy(self.make_scored([True] * 13 + [False] * 7)) == 0.65
        assert node_accuracy(self.make_scored([True] * 8 + [False] * 12)) == 0.40

    def test_zero_correct(self):
        assert node_accuracy(self.make_scored([False] * 20)) == 0.0

    def test_empty_undefined(self):
        with pytest.raises(UndefinedAccuracyError):
            node_accuracy([])

    def test_permutation_invariant(self):
        flags = [True, False, True, True, False]
        a = node_accuracy(self.make_scored(flags))
        b = node_accuracy(self.make_scored(list(reversed(flags))))
        assert a == b


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        EmbeddingTable({"x": np.zeros(4)})


def test_mixed_dim_rejected():
    with pytest.raises(ValueError):
        EmbeddingTable({"x": np.ones(3), "y": np.ones(4)})
