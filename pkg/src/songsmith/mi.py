"""Mutual-information consistency term and the syllable similarity heatmap.

The generator emits one interpretable vector per step. A small posterior
network predicts the lyric condition vector back from it; under a
unit-variance Gaussian posterior the variational lower bound on the mutual
information between the two reduces (up to the constant lyric entropy) to
the negative mean squared reconstruction error. Maximizing it keeps the
per-syllable lyric content recoverable from the generator's internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ContractError, VocabLookupError
from .gan import EMBED_DIM, GeneratorParams, generator_forward
from .lyrics import LyricsEmbedding


@dataclass
class PosteriorParams:
    """Two-layer reconstruction network; the tail layer is bias-free."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray

    @classmethod
    def init(cls, seed: int, hidden: int = 64) -> "PosteriorParams":
        rng = np.random.Generator(np.random.PCG64(seed))
        a1 = np.sqrt(6.0 / (EMBED_DIM + hidden))
        a2 = np.sqrt(6.0 / (hidden + EMBED_DIM))
        return cls(rng.uniform(-a1, a1, size=(EMBED_DIM, hidden)),
                   np.zeros(hidden),
                   rng.uniform(-a2, a2, size=(hidden, EMBED_DIM)))

    def flatten(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2]

    def load(self, arrays: list[np.ndarray]) -> None:
        self.w1, self.b1, self.w2 = arrays


def q_forward(m_seq: Node, q_params: PosteriorParams,
              param_nodes: list[Node] | None = None) -> tuple[Node, list[Node]]:
    """Predict lyric vectors from interpretable vectors; returns (x̂, params)."""
    if m_seq.value.ndim != 2 or m_seq.value.shape[1] != EMBED_DIM:
        raise ContractError(f"posterior input must be (steps, {EMBED_DIM}), "
                            f"got {m_seq.value.shape}")
    nodes = param_nodes if param_nodes is not None else [ad.leaf(a) for a in q_params.flatten()]
    w1, b1, w2 = nodes
    hidden = ad.tanh(ad.add(ad.matmul(m_seq, w1), b1))
    return ad.matmul(hidden, w2), nodes


def mi_lower_bound(x_seq, xhat_seq: Node) -> Node:
    """Bound value up to the constant lyric entropy: -(1/T) sum of squared
    reconstruction error halves. Zero iff reconstruction is exact."""
    xv = x_seq.vectors if isinstance(x_seq, LyricsEmbedding) else np.asarray(x_seq, float)
    if xv.shape != xhat_seq.value.shape:
        raise ContractError(f"lyrics {xv.shape} and reconstruction "
                            f"{xhat_seq.value.shape} shapes differ")
    steps = xv.shape[0]
    diff = ad.sub(ad.const(xv), xhat_seq)
    return ad.scale(ad.sum_all(ad.mul(diff, diff)), -0.5 / steps)


def mi_training_objective(x, noise, gen_params: GeneratorParams,
                          q_params: PosteriorParams, tau: float, lambda_mi: float,
                          rng: np.random.Generator):
    """Loss contribution -lambda * bound; gradients reach generator and Q.

    Returns (loss node, generator param nodes, posterior param nodes).
    """
    if lambda_mi < 0:
        raise ContractError("lambda_mi must be non-negative")
    out = generator_forward(x, noise, gen_params, tau, rng)
    xhat, q_nodes = q_forward(out.m_seq, q_params)
    loss = ad.scale(mi_lower_bound(x, xhat), -lambda_mi)
    return loss, out.param_nodes, q_nodes


@dataclass
class SimilarityMatrix:
    labels: list[str]
    values: np.ndarray  # (n, n), cosine similarities


def cosine_matrix(labels: list[str], vectors: np.ndarray) -> SimilarityMatrix:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.clip(norms, 1e-12, None)
    return SimilarityMatrix(list(labels), unit @ unit.T)


def interpretable_vectors(checkpoint, text: str, seed: int = 0,
                          draws: int = 8) -> tuple[list[str], np.ndarray]:
    """Mean interpretable vector per step of one lyric line."""
    from .lyrics import encode, tokenize_lyrics

    seq = tokenize_lyrics(text)
    emb = encode(seq, checkpoint.syl_table, checkpoint.word_table)
    rng = np.random.Generator(np.random.PCG64(seed))
    acc = np.zeros((len(seq.syllables), EMBED_DIM))
    for _ in range(draws):
        noise = rng.standard_normal((len(seq.syllables), checkpoint.gen.noise_dim))
        out = generator_forward(emb, noise, checkpoint.gen,
                                checkpoint.config.tau_end, rng)
        acc += out.m_seq.value
    return seq.syllables, acc / draws


def syllable_heatmap(checkpoint, syllables: list[str], source: str = "embedding",
                     probe_texts: list[str] | None = None, seed: int = 0,
                     draws: int = 8) -> SimilarityMatrix:
    """Pairwise cosine similarity of syllable representations.

    source="embedding" compares raw syllable vectors; "interpretable"
    compares mean per-syllable interpretable vectors collected from probe
    lyrics (each syllable probed as a standalone word when no probe text
    is given).
    """
    vocab = checkpoint.syl_table.vocab
    missing = [s for s in syllables if s not in vocab.id_of_token]
    if missing:
        raise VocabLookupError(f"syllables not in vocabulary: {', '.join(missing)}")

    if source == "embedding":
        rows = np.stack([checkpoint.syl_table.vector(s) for s in syllables])
        return cosine_matrix(syllables, rows)
    if source != "interpretable":
        raise ContractError(f"unknown heatmap source {source!r}")

    texts = probe_texts if probe_texts is not None else list(dict.fromkeys(syllables))
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for i, text in enumerate(texts):
        labels, vectors = interpretable_vectors(checkpoint, text, seed=seed + i,
                                                draws=draws)
        for label, vec in zip(labels, vectors):
            sums[label] = sums.get(label, 0.0) + vec
            counts[label] = counts.get(label, 0) + 1
    absent = [s for s in syllables if s not in sums]
    if absent:
        raise VocabLookupError("syllables never occur in the probe lyrics: "
                               + ", ".join(absent))
    rows = np.stack([sums[s] / counts[s] for s in syllables])
    return cosine_matrix(syllables, rows)


def heatmap_csv(sim: SimilarityMatrix) -> str:
    """Header row/column of syllables, six-decimal similarities."""
    lines = ["," + ",".join(sim.labels)]
    for label, row in zip(sim.labels, sim.values):
        lines.append(label + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def heatmap_pgm(sim: SimilarityMatrix, cell: int = 16) -> bytes:
    """Grayscale portable graymap; darker means more similar."""
    n = len(sim.labels)
    shade = 255 - np.round((sim.values + 1.0) / 2.0 * 255.0).astype(np.uint8)
    img = np.kron(shade, np.ones((cell, cell), dtype=np.uint8))
    header = f"P5\n{n * cell} {n * cell}\n255\n".encode("ascii")
    return header + img.tobytes()
