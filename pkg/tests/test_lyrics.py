"""Tokenizer, syllabifier, and skip-gram embedding tests.

Syllable expectations were derived by hand from the documented rule set
(vowel-run nuclei, doubled-consonant split, single onset goes right,
silent final e, consonant+le endings).
"""

import numpy as np
import pytest

from songsmith import lyrics
from songsmith.errors import ConfigError, TokenizationError
from songsmith.lyrics import (LyricsSequence, SkipgramConfig, encode,
                              syllabify, tokenize_lyrics, train_skipgram)


@pytest.mark.parametrize("word,expected", [
    ("sun", ["sun"]),
    ("happy", ["hap", "py"]),
    ("listen", ["lis", "ten"]),
    ("hello", ["hel", "lo"]),
    ("world", ["world"]),
    ("star", ["star"]),
    ("twinkle", ["twin", "kle"]),
    ("little", ["lit", "tle"]),
    ("table", ["ta", "ble"]),
    ("whale", ["whale"]),
    ("there", ["there"]),
    ("mother", ["mo", "ther"]),
    ("away", ["a", "way"]),
    ("mary", ["ma", "ry"]),
    ("merrily", ["mer", "ri", "ly"]),
    ("a", ["a"]),
    ("don't", ["don't"]),
])
def test_syllabify_rule_cases(word, expected):
    assert syllabify(word) == expected


def test_syllabify_concatenation_postcondition():
    for word in ["beautiful", "gently", "monster", "yellow", "rhythm", "believe"]:
        assert "".join(syllabify(word)) == word


def test_syllabify_rejects_non_alphabetic():
    for bad in ["", "123", "a1b"]:
        with pytest.raises(TokenizationError):
            syllabify(bad)


def test_tokenize_hello_world():
    seq = tokenize_lyrics("Hello world")
    assert seq.words == ["hello", "world"]
    assert seq.syllables == ["hel", "lo", "world"]
    assert seq.word_index_of_syllable == [0, 0, 1]


def test_tokenize_single_letter():
    seq = tokenize_lyrics("a")
    assert seq.words == ["a"]
    assert seq.syllables == ["a"]
    assert seq.word_index_of_syllable == [0]


def test_tokenize_strips_punctuation_keeps_apostrophe():
    seq = tokenize_lyrics("Don't stop, world!")
    assert seq.words == ["don't", "stop", "world"]


def test_tokenize_rejects_no_words():
    with pytest.raises(TokenizationError):
        tokenize_lyrics("123 !!!")
    with pytest.raises(TokenizationError):
        tokenize_lyrics("   ")


def test_tokenize_round_trip_words():
    texts = [
        "Twinkle twinkle little star",
        "Mary had a little lamb",
        "Row row row your boat gently down the stream",
    ]
    for text in texts:
        seq = tokenize_lyrics(text)
        assert len(seq.syllables) == len(seq.word_index_of_syllable)
        # alignment map is non-decreasing and surjective
        assert seq.word_index_of_syllable == sorted(seq.word_index_of_syllable)
        assert set(seq.word_index_of_syllable) == set(range(len(seq.words)))
        # grouping syllables by word reproduces each word
        for wi, word in enumerate(seq.words):
            joined = "".join(s for s, m in zip(seq.syllables, seq.word_index_of_syllable)
                             if m == wi)
            assert joined == word


def seq_of(tokens):
    return LyricsSequence(list(tokens), list(range(len(tokens))), list(tokens))


def cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def co_occurrence_corpus():
    """Each designed pair shares a context set no other token sees."""
    corpus = []
    pairs = [("aa", "bb"), ("cc", "dd"), ("ee", "ff"), ("gg", "hh")]
    for _ in range(20):
        for x, y in pairs:
            corpus.append(seq_of([x, y, x, y, x, y]))
    return corpus, pairs


def test_skipgram_separates_designed_pairs():
    corpus, pairs = co_occurrence_corpus()
    table = train_skipgram(corpus, "word", SkipgramConfig(epochs=60, seed=3))
    vec = {t: table.vector(t) for t in "aa bb cc dd ee ff gg hh".split()}
    assert cos(vec["aa"], vec["bb"]) - cos(vec["aa"], vec["cc"]) > 0.3


def test_skipgram_loss_decreases():
    corpus, _ = co_occurrence_corpus()
    table = train_skipgram(corpus, "word", SkipgramConfig(epochs=40, seed=5))
    losses = table.train_losses
    assert losses[-1] < losses[0]


def test_skipgram_dim_default_10():
    corpus, _ = co_occurrence_corpus()
    table = train_skipgram(corpus, "word", SkipgramConfig(epochs=2))
    assert table.vectors.shape[1] == 10


def test_skipgram_single_token_corpus_completes():
    table = train_skipgram([seq_of(["solo"])], "word", SkipgramConfig(epochs=5))
    assert np.isfinite(table.vectors).all()
    assert table.vectors.shape[0] == 2  # unknown + the token


def test_skipgram_small_vocab_rejects_negative_count():
    corpus = [seq_of(["aa", "bb"])] * 4
    with pytest.raises(ConfigError):
        train_skipgram(corpus, "word", SkipgramConfig(negatives=5))


def test_skipgram_deterministic():
    corpus, _ = co_occurrence_corpus()
    t1 = train_skipgram(corpus, "word", SkipgramConfig(epochs=10, seed=9))
    t2 = train_skipgram(corpus, "word", SkipgramConfig(epochs=10, seed=9))
    assert np.array_equal(t1.vectors, t2.vectors)


def trained_tables(corpus):
    syl = train_skipgram(corpus, "syllable", SkipgramConfig(epochs=3, negatives=2))
    word = train_skipgram(corpus, "word", SkipgramConfig(epochs=3, negatives=2))
    return syl, word


def test_encode_shapes_and_word_sharing():
    corpus = [tokenize_lyrics("hello little world"), tokenize_lyrics("happy little star")]
    syl, word = trained_tables(corpus)
    emb = encode(corpus[0], syl, word)
    assert emb.vectors.shape == (5, 20)  # hel lo / lit tle / world
    # "hello" contributes two syllables that share the word half exactly
    assert np.array_equal(emb.vectors[0, 10:], emb.vectors[1, 10:])


def test_encode_oov_uses_zero_vector():
    corpus = [tokenize_lyrics("hello world")]
    syl, word = trained_tables(corpus)
    emb = encode(tokenize_lyrics("goodbye world"), syl, word)
    assert np.array_equal(emb.vectors[0], np.zeros(20))


def test_embedding_csv_header_and_rows():
    corpus = [tokenize_lyrics("hello world")]
    syl, _ = trained_tables(corpus)
    csv = lyrics.embedding_csv(syl)
    lines = csv.strip().split("\n")
    assert lines[0] == "token," + ",".join(f"v{i}" for i in range(1, 11))
    assert len(lines) == 1 + len(syl.vocab)
