"""Lyrics tokenization and two-level embedding training.

Lyrics are lowercased, stripped of punctuation (apostrophes survive inside
words), split into words, and each word into syllables by a deterministic
rule engine. Two skip-gram models with negative sampling are trained, one
over syllable streams and one over word streams; a lyric line is encoded
as one 20-d vector per syllable, the syllable vector concatenated with its
enclosing word's vector.

Syllabification rules, in order:

1. Nuclei are maximal vowel runs. ``y`` counts as a vowel unless it is
   word-initial or directly followed by a plain vowel.
2. A final ``e`` is silent (folded into the previous syllable) when it is
   its own nucleus and another nucleus precedes it, except in the
   consonant+``le`` ending, which keeps its syllable (ta-ble, twin-kle).
3. Consonants between nuclei: none or one go right; two split down the
   middle; three or more leave the first behind. The digraphs ch, sh, th,
   ph, wh move as a unit.

The rules are auditable rather than dictionary-perfect; what matters here
is that they are total and deterministic, and that syllables always
concatenate back to the word.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, TokenizationError

UNKNOWN_TOKEN = "<unk>"

_VOWELS = set("aeiou")
_DIGRAPHS = {"ch", "sh", "th", "ph", "wh"}
_WORD_RE = re.compile(r"[a-z']+")


@dataclass
class LyricsSequence:
    """Aligned syllable and word streams for one lyric text."""

    syllables: list[str]
    word_index_of_syllable: list[int]
    words: list[str]

    def __post_init__(self):
        if len(self.syllables) != len(self.word_index_of_syllable):
            raise TokenizationError("syllable stream and alignment map lengths differ")


@dataclass
class Vocab:
    id_of_token: dict[str, int]
    token_of_id: list[str]
    counts: list[int]

    @classmethod
    def from_tokens(cls, tokens) -> "Vocab":
        """Dense ids ordered by first appearance; id 0 is the unknown token."""
        id_of = {UNKNOWN_TOKEN: 0}
        toks = [UNKNOWN_TOKEN]
        counts = [0]
        for t in tokens:
            i = id_of.get(t)
            if i is None:
                id_of[t] = len(toks)
                toks.append(t)
                counts.append(1)
            else:
                counts[i] += 1
        return cls(id_of, toks, counts)

    def __len__(self):
        return len(self.token_of_id)

    def lookup(self, token: str) -> int:
        return self.id_of_token.get(token, 0)


@dataclass
class EmbeddingTable:
    level: str  # "syllable" or "word"
    dim: int
    vectors: np.ndarray  # (vocab size, dim) float64
    vocab: Vocab

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.lookup(token)]


@dataclass
class LyricsEmbedding:
    """One 20-d condition vector per syllable (syllable half ++ word half)."""

    vectors: np.ndarray  # (syllable count, 2*dim)
    sequence: LyricsSequence

    def __len__(self):
        return self.vectors.shape[0]


@dataclass
class SkipgramConfig:
    dim: int = 10
    window: int = 2
    negatives: int = 5
    epochs: int = 80
    lr: float = 0.05
    seed: int = 0
    noise_power: float = 0.75


def _is_vowel(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return True
    if ch == "y":
        nxt = word[i + 1] if i + 1 < len(word) else ""
        return i > 0 and nxt not in _VOWELS
    return False


def _consonant_units(word: str, start: int, stop: int) -> list[int]:
    """Start index of each consonant unit in word[start:stop]."""
    units = []
    i = start
    while i < stop:
        units.append(i)
        if word[i:i + 2] in _DIGRAPHS and i + 2 <= stop:
            i += 2
        else:
            i += 1
    return units


def syllabify(word: str) -> list[str]:
    """Split one normalized word into syllables; pieces concatenate to word."""
    if not word or not any(c.isalpha() for c in word) \
            or not all(c.isalpha() or c == "'" for c in word):
        raise TokenizationError(f"cannot syllabify {word!r}: not an alphabetic word")

    n = len(word)
    vowel = [_is_vowel(word, i) for i in range(n)]
    nuclei: list[tuple[int, int]] = []  # [start, end) spans
    i = 0
    while i < n:
        if vowel[i]:
            j = i
            while j < n and vowel[j]:
                j += 1
            nuclei.append((i, j))
            i = j
        else:
            i += 1

    if len(nuclei) <= 1:
        return [word]

    # final silent e, unless the word ends in consonant + "le"
    last_start, last_end = nuclei[-1]
    if word[-1] == "e" and last_end == n and last_start == n - 1:
        c_le = n >= 3 and word[-2] == "l" and not _is_vowel(word, n - 3)
        if not c_le:
            nuclei.pop()
            if len(nuclei) == 1:
                return [word]

    cuts = []
    for (_, left_end), (right_start, _) in zip(nuclei, nuclei[1:]):
        if right_start == n - 1 and word[-1] == "e" and word[n - 2] == "l" \
                and right_start - left_end >= 2:
            cuts.append(n - 2 - 1)  # consonant + "le" keeps one onset consonant
            continue
        units = _consonant_units(word, left_end, right_start)
        if len(units) <= 1:
            cuts.append(left_end)
        elif len(units) == 2:
            cuts.append(units[1])
        else:
            cuts.append(units[1])
    pieces = []
    prev = 0
    for cut in cuts:
        pieces.append(word[prev:cut])
        prev = cut
    pieces.append(word[prev:])
    return [p for p in pieces if p]


def tokenize_lyrics(text: str) -> LyricsSequence:
    """Lowercase, split on whitespace/punctuation, and syllabify each word."""
    if not text or not text.strip():
        raise TokenizationError("empty lyrics text")
    words = []
    for raw in _WORD_RE.findall(text.lower()):
        w = raw.strip("'")
        if w and any(c.isalpha() for c in w):
            words.append(w)
    if not words:
        raise TokenizationError(f"no alphabetic words in lyrics: {text!r}")
    syllables: list[str] = []
    mapping: list[int] = []
    for wi, w in enumerate(words):
        for s in syllabify(w):
            syllables.append(s)
            mapping.append(wi)
    return LyricsSequence(syllables, mapping, words)


def _token_streams(corpus: list[LyricsSequence], level: str) -> list[list[str]]:
    if level == "syllable":
        return [seq.syllables for seq in corpus]
    if level == "word":
        return [seq.words for seq in corpus]
    raise ConfigError(f"unknown embedding level {level!r}")


def train_skipgram(corpus: list[LyricsSequence], level: str,
                   config: SkipgramConfig | None = None) -> EmbeddingTable:
    """Skip-gram with negative sampling over one token level.

    Deterministic given the seed. The unknown token keeps a zero vector.
    """
    config = config or SkipgramConfig()
    if not corpus:
        raise ConfigError("skip-gram training needs a non-empty corpus")
    if config.window < 1 or config.dim < 1:
        raise ConfigError("skip-gram needs window >= 1 and dim >= 1")

    streams = _token_streams(corpus, level)
    vocab = Vocab.from_tokens(t for stream in streams for t in stream)
    v = len(vocab)

    pairs_c: list[int] = []
    pairs_o: list[int] = []
    for stream in streams:
        ids = [vocab.lookup(t) for t in stream]
        for i, center in enumerate(ids):
            lo = max(0, i - config.window)
            hi = min(len(ids), i + config.window + 1)
            for j in range(lo, hi):
                if j != i:
                    pairs_c.append(center)
                    pairs_o.append(ids[j])

    real_vocab = v - 1  # excludes the reserved unknown id
    if pairs_c and real_vocab < config.negatives:
        raise ConfigError(f"vocabulary of {real_vocab} tokens is smaller than the "
                          f"negative-sample count {config.negatives}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    syn0 = rng.uniform(-0.5 / config.dim, 0.5 / config.dim, size=(v, config.dim))
    syn0[0] = 0.0
    syn1 = np.zeros((v, config.dim))

    losses: list[float] = []
    if pairs_c:
        # The kernel works on the real-token block; ids shift down by one
        # so the reserved unknown row never trains and stays zero.
        centers = np.asarray(pairs_c, dtype=np.int32) - 1
        contexts = np.asarray(pairs_o, dtype=np.int32) - 1
        weights = np.asarray(vocab.counts[1:], dtype=np.float64) ** config.noise_power
        cum_table = np.cumsum(weights)
        state = int(rng.integers(1, 2 ** 63))
        for epoch in range(config.epochs):
            order = rng.permutation(len(centers))
            lr = config.lr * max(1.0 - epoch / config.epochs, 1e-4)
            loss, state = kernels.sgns_epoch(
                np.ascontiguousarray(centers[order]),
                np.ascontiguousarray(contexts[order]),
                syn0[1:], syn1[1:], cum_table, config.negatives, lr, state)
            losses.append(loss)

    table = EmbeddingTable(level, config.dim, syn0, vocab)
    table.train_losses = losses  # inspectable, not serialized
    return table


def encode(seq: LyricsSequence, syl_table: EmbeddingTable,
           word_table: EmbeddingTable) -> LyricsEmbedding:
    """Per-syllable condition vectors; out-of-vocabulary tokens map to zeros."""
    rows = np.empty((len(seq.syllables), syl_table.dim + word_table.dim))
    for t, (syl, wi) in enumerate(zip(seq.syllables, seq.word_index_of_syllable)):
        rows[t, :syl_table.dim] = syl_table.vector(syl)
        rows[t, syl_table.dim:] = word_table.vector(seq.words[wi])
    return LyricsEmbedding(rows, seq)


def embedding_csv(table: EmbeddingTable) -> str:
    """Inspectable dump: token, v1..vdim (full float precision)."""
    lines = ["token," + ",".join(f"v{i + 1}" for i in range(table.dim))]
    for tid, token in enumerate(table.vocab.token_of_id):
        vals = ",".join(repr(float(x)) for x in table.vectors[tid])
        lines.append(f"{token},{vals}")
    return "\n".join(lines) + "\n"
