"""Conditional discrete-output melody GAN.

The generator maps per-syllable lyric condition vectors plus fresh noise
through a projection and a stacked LSTM to three categorical heads (pitch,
duration, rest) and an interpretability projection. Sampling the discrete
heads inside a differentiable graph uses the Gumbel-Softmax relaxation;
real and generated melodies are scored by a conditional LSTM critic and
trained with the relativistic pairing losses.

Generation is not autoregressive over its own outputs: each step consumes
only the lyric vector and noise, which is what makes recomposition a local
substitution later on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ConfigError, ContractError
from .lyrics import LyricsEmbedding

EMBED_DIM = 20


@dataclass
class AttributeVocab:
    """Value sets for the three melody attributes."""

    pitch_values: list[int]
    duration_values: list[float]
    rest_values: list[float]

    def __post_init__(self):
        for name, values in (("pitch", self.pitch_values),
                             ("duration", self.duration_values),
                             ("rest", self.rest_values)):
            if not values:
                raise ConfigError(f"{name} vocabulary is empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigError(f"{name} values must be strictly increasing")
        if self.pitch_values[0] < 0 or self.pitch_values[-1] > 127:
            raise ConfigError("pitch values must lie in MIDI range 0..127")

    @classmethod
    def default(cls) -> "AttributeVocab":
        return cls(pitch_values=list(range(48, 84)),
                   duration_values=[0.25, 0.5, 1.0, 1.5, 2.0, 4.0],
                   rest_values=[0.0, 0.5, 1.0, 2.0])

    def values_of(self, attribute: str) -> list:
        try:
            return getattr(self, f"{attribute}_values")
        except AttributeError:
            raise ContractError(f"unknown attribute {attribute!r}") from None

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.pitch_values), len(self.duration_values), len(self.rest_values))


ATTRIBUTES = ("pitch", "duration", "rest")


@dataclass
class AttributeDistributions:
    """Per-step categorical distributions over the three attribute vocabs."""

    pitch: np.ndarray     # (T, |pitch|)
    duration: np.ndarray  # (T, |duration|)
    rest: np.ndarray      # (T, |rest|)

    def __len__(self):
        return self.pitch.shape[0]

    def head(self, attribute: str) -> np.ndarray:
        return getattr(self, attribute)


@dataclass
class RelaxedMelody:
    """Gumbel-Softmax samples, one relaxed one-hot triple per step."""

    pitch: np.ndarray
    duration: np.ndarray
    rest: np.ndarray
    temperature: float

    def __len__(self):
        return self.pitch.shape[0]


def _glorot(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _lstm_cell_init(rng, input_dim, hidden):
    w = _glorot(rng, input_dim + hidden, 4 * hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias keeps early memories alive
    return w, b


@dataclass
class GeneratorParams:
    """Weights of the melody generator; arrays only, graph built per call."""

    w_in: np.ndarray
    b_in: np.ndarray
    cells: list[tuple[np.ndarray, np.ndarray]]
    heads: dict[str, tuple[np.ndarray, np.ndarray]]
    w_m: np.ndarray
    b_m: np.ndarray
    noise_dim: int
    hidden: int

    @classmethod
    def init(cls, vocab: AttributeVocab, seed: int, hidden: int = 128,
             proj: int = 32, noise_dim: int = 20, layers: int = 2) -> "GeneratorParams":
        rng = np.random.Generator(np.random.PCG64(seed))
        w_in = _glorot(rng, EMBED_DIM + noise_dim, proj)
        b_in = np.zeros(proj)
        cells = []
        dim = proj
        for _ in range(layers):
            cells.append(_lstm_cell_init(rng, dim, hidden))
            dim = hidden
        heads = {}
        for name, size in zip(ATTRIBUTES, vocab.sizes):
            heads[name] = (_glorot(rng, hidden, size), np.zeros(size))
        # interpretability projection reads the hidden state plus the input
        # projection; the skip keeps a direct lyric-driven path for the
        # information term to amplify
        w_m = _glorot(rng, hidden + proj, EMBED_DIM)
        b_m = np.zeros(EMBED_DIM)
        return cls(w_in, b_in, cells, heads, w_m, b_m, noise_dim, hidden)

    def flatten(self) -> list[np.ndarray]:
        out = [self.w_in, self.b_in]
        for w, b in self.cells:
            out += [w, b]
        for name in ATTRIBUTES:
            out += list(self.heads[name])
        out += [self.w_m, self.b_m]
        return out

    def load(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        self.w_in, self.b_in = next(it), next(it)
        self.cells = [(next(it), next(it)) for _ in self.cells]
        self.heads = {name: (next(it), next(it)) for name in ATTRIBUTES}
        self.w_m, self.b_m = next(it), next(it)


@dataclass
class DiscriminatorParams:
    """Weights of the conditional critic."""

    cells: list[tuple[np.ndarray, np.ndarray]]
    w_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def init(cls, vocab: AttributeVocab, seed: int, hidden: int = 128,
             layers: int = 2) -> "DiscriminatorParams":
        rng = np.random.Generator(np.random.PCG64(seed))
        dim = EMBED_DIM + sum(vocab.sizes)
        cells = []
        for _ in range(layers):
            cells.append(_lstm_cell_init(rng, dim, hidden))
            dim = hidden
        return cls(cells, _glorot(rng, hidden, 1), np.zeros(1))

    def flatten(self) -> list[np.ndarray]:
        out = []
        for w, b in self.cells:
            out += [w, b]
        out += [self.w_out, self.b_out]
        return out

    def load(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        self.cells = [(next(it), next(it)) for _ in self.cells]
        self.w_out, self.b_out = next(it), next(it)


def gumbel_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel draws, clamped away from u in {0, 1}."""
    if n < 1:
        raise ContractError("gumbel_noise needs n >= 1")
    u = np.clip(rng.random(n), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: Node, tau: float, rng: np.random.Generator) -> Node:
    """Differentiable relaxed one-hot sample of a categorical."""
    if tau <= 0:
        raise ContractError(f"gumbel_softmax needs tau > 0, got {tau}")
    g = gumbel_noise(logits.value.size, rng).reshape(logits.value.shape)
    return ad.softmax(ad.scale(ad.add(logits, ad.const(g)), 1.0 / tau), axis=-1)


def _run_lstm(cells_nodes, x: Node, hidden: int) -> Node:
    """Stacked LSTM over the rows of x (T, D); returns hidden states (T, H)."""
    t_steps = x.value.shape[0]
    layers = len(cells_nodes)
    h = [ad.const(np.zeros((1, hidden))) for _ in range(layers)]
    c = [ad.const(np.zeros((1, hidden))) for _ in range(layers)]
    outs = []
    for t in range(t_steps):
        inp = ad.slice_(x, axis=0, start=t, stop=t + 1)
        for li, (w, b) in enumerate(cells_nodes):
            xh = ad.concat([inp, h[li]], axis=1)
            pre = ad.add(ad.matmul(xh, w), b)
            hc = ad.lstm_gates(pre, c[li])
            h[li] = ad.slice_(hc, axis=1, start=0, stop=hidden)
            c[li] = ad.slice_(hc, axis=1, start=hidden, stop=2 * hidden)
            inp = h[li]
        outs.append(inp)
    return outs[0] if t_steps == 1 else ad.concat(outs, axis=0)


@dataclass
class GeneratorGraph:
    """Handles into one generator forward pass (define-by-run nodes)."""

    param_nodes: list[Node]
    dists: dict[str, Node]    # softmax heads, (T, V) each
    relaxed: dict[str, Node]  # Gumbel-Softmax samples, (T, V) each
    m_seq: Node               # interpretability projection, (T, 20)
    temperature: float

    def distributions(self) -> AttributeDistributions:
        return AttributeDistributions(self.dists["pitch"].value.copy(),
                                      self.dists["duration"].value.copy(),
                                      self.dists["rest"].value.copy())

    def relaxed_melody(self) -> RelaxedMelody:
        return RelaxedMelody(self.relaxed["pitch"].value.copy(),
                             self.relaxed["duration"].value.copy(),
                             self.relaxed["rest"].value.copy(),
                             self.temperature)


def generator_forward(x, noise: np.ndarray, params: GeneratorParams, tau: float,
                      rng: np.random.Generator,
                      param_nodes: list[Node] | None = None) -> GeneratorGraph:
    """One conditioned forward pass; one step per syllable.

    Passing param_nodes shares parameter leaves across several forward
    passes so one backward call accumulates batch gradients.
    """
    xv = x.vectors if isinstance(x, LyricsEmbedding) else np.asarray(x, dtype=np.float64)
    if xv.ndim != 2 or xv.shape[1] != EMBED_DIM:
        raise ContractError(f"lyrics embedding must be (steps, {EMBED_DIM}), got {xv.shape}")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (xv.shape[0], params.noise_dim):
        raise ContractError(f"noise shape {noise.shape} does not match "
                            f"({xv.shape[0]}, {params.noise_dim})")

    nodes = param_nodes if param_nodes is not None else [ad.leaf(a) for a in params.flatten()]
    it = iter(nodes)
    w_in, b_in = next(it), next(it)
    cells = [(next(it), next(it)) for _ in params.cells]
    heads = {name: (next(it), next(it)) for name in ATTRIBUTES}
    w_m, b_m = next(it), next(it)

    inp = ad.tanh(ad.add(ad.matmul(ad.const(np.concatenate([xv, noise], axis=1)), w_in), b_in))
    hidden_seq = _run_lstm(cells, inp, params.hidden)

    dists = {}
    relaxed = {}
    for name in ATTRIBUTES:
        w, b = heads[name]
        logits = ad.add(ad.matmul(hidden_seq, w), b)
        dists[name] = ad.softmax(logits, axis=1)
        relaxed[name] = gumbel_softmax(logits, tau, rng)
    m_seq = ad.add(ad.matmul(ad.concat([hidden_seq, inp], axis=1), w_m), b_m)
    return GeneratorGraph(nodes, dists, relaxed, m_seq, tau)


def discriminator_forward(x, melody, params: DiscriminatorParams,
                          param_nodes: list[Node] | None = None) -> tuple[Node, list[Node]]:
    """Scalar critic score for a (lyrics, melody) pair.

    melody is a (pitch, duration, rest) triple of per-step vectors, either
    graph nodes (relaxed samples) or plain arrays (one-hot real melodies).
    Returns (score node, parameter nodes).
    """
    xv = x.vectors if isinstance(x, LyricsEmbedding) else np.asarray(x, dtype=np.float64)
    parts = [ad.const(xv)]
    steps = xv.shape[0]
    for item in melody:
        node = item if isinstance(item, Node) else ad.const(np.asarray(item, dtype=np.float64))
        if node.value.shape[0] != steps:
            raise ContractError(f"melody has {node.value.shape[0]} steps for "
                                f"{steps} syllables")
        parts.append(node)

    nodes = param_nodes if param_nodes is not None else [ad.leaf(a) for a in params.flatten()]
    it = iter(nodes)
    cells = [(next(it), next(it)) for _ in params.cells]
    w_out, b_out = next(it), next(it)

    hidden = params.w_out.shape[0]
    feats = ad.concat(parts, axis=1)
    hidden_seq = _run_lstm(cells, feats, hidden)
    last = ad.slice_(hidden_seq, axis=0, start=steps - 1, stop=steps)
    score = ad.sum_all(ad.add(ad.matmul(last, w_out), b_out))
    return score, nodes


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else ad.const(np.float64(x))


def rsgan_d_loss(c_real, c_fake) -> Node:
    """Critic loss of the relativistic pairing: -log sigmoid(real - fake)."""
    return ad.softplus(ad.sub(_as_node(c_fake), _as_node(c_real)))


def rsgan_g_loss(c_real, c_fake) -> Node:
    """Generator loss of the relativistic pairing: -log sigmoid(fake - real)."""
    return ad.softplus(ad.sub(_as_node(c_real), _as_node(c_fake)))
