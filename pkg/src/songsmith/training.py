"""Corpus loading, the adversarial training loop, and checkpoints.

A corpus is JSON lines, one song per line:

    {"lyrics": "...", "notes": [{"pitch": 62, "duration": 1.0, "rest": 0.0}, ...]}

with exactly one note per syllable of the tokenized lyrics. Training
alternates critic updates (relativistic pairing against a generated melody
for the same lyrics) with generator updates carrying the
mutual-information term, anneals the sampling temperature, and is
bit-reproducible from (corpus, config, seed).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ConfigError, CorpusFormatError
from .gan import (ATTRIBUTES, AttributeVocab, DiscriminatorParams, GeneratorParams,
                  discriminator_forward, generator_forward, rsgan_d_loss, rsgan_g_loss)
from .lyrics import (EmbeddingTable, LyricsSequence, SkipgramConfig, Vocab, encode,
                     tokenize_lyrics, train_skipgram)
from .mi import PosteriorParams, mi_lower_bound, q_forward

CHECKPOINT_MAGIC = b"SSCK"
CHECKPOINT_VERSION = 1


@dataclass
class CorpusEntry:
    seq: LyricsSequence
    melody: np.ndarray  # (steps, 3) attribute indices


@dataclass
class Corpus:
    entries: list[CorpusEntry]
    vocab: AttributeVocab

    def __len__(self):
        return len(self.entries)


def load_corpus(path, vocab: AttributeVocab | None = None) -> Corpus:
    """Parse and validate a JSONL corpus; error messages carry line numbers."""
    vocab = vocab or AttributeVocab.default()
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lookup = {name: {v: i for i, v in enumerate(vocab.values_of(name))}
              for name in ATTRIBUTES}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(doc, dict) or "lyrics" not in doc or "notes" not in doc:
            raise CorpusFormatError(f"line {lineno}: expected object with "
                                    "'lyrics' and 'notes'")
        try:
            seq = tokenize_lyrics(doc["lyrics"])
        except Exception as exc:
            raise CorpusFormatError(f"line {lineno}: {exc}") from None
        notes = doc["notes"]
        if len(notes) != len(seq.syllables):
            raise CorpusFormatError(f"line {lineno}: {len(seq.syllables)} syllables "
                                    f"but {len(notes)} notes")
        melody = np.empty((len(notes), 3), dtype=np.int64)
        for step, note in enumerate(notes):
            for col, (name, key) in enumerate((("pitch", "pitch"),
                                               ("duration", "duration"),
                                               ("rest", "rest"))):
                value = note.get(key)
                idx = lookup[name].get(value)
                if idx is None:
                    raise CorpusFormatError(f"line {lineno}: unknown {name} value "
                                            f"{value!r} at step {step}")
                melody[step, col] = idx
        entries.append(CorpusEntry(seq, melody))
    if not entries:
        raise CorpusFormatError("empty corpus")
    return Corpus(entries, vocab)


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 4
    steps: int = 2000
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    lr_q: float = 1e-3
    lambda_mi: float = 0.5
    tau_start: float = 1.0
    tau_end: float = 0.2
    d_steps_per_g_step: int = 1
    checkpoint_interval: int = 200
    pretrain_steps: int = 0
    grad_clip: float = 5.0
    hidden_size: int = 128
    proj_size: int = 32
    noise_dim: int = 20
    lstm_layers: int = 2
    q_hidden: int = 64
    embed_dim: int = 10
    sg_window: int = 2
    sg_negatives: int = 5
    sg_epochs: int = 60
    sg_lr: float = 0.05

    def __post_init__(self):
        if min(self.lr_g, self.lr_d, self.lr_q) <= 0:
            raise ConfigError("learning rates must be positive")
        if not (self.tau_start >= self.tau_end > 0):
            raise ConfigError("need tau_start >= tau_end > 0")
        if self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ConfigError("batch_size and d_steps_per_g_step must be >= 1")
        if self.steps < 0 or self.pretrain_steps < 0:
            raise ConfigError("step counts cannot be negative")

    def tau_at(self, step: int) -> float:
        if self.steps <= 1:
            return self.tau_start
        frac = step / (self.steps - 1)
        return self.tau_start * (self.tau_end / self.tau_start) ** frac


@dataclass(eq=False)
class Checkpoint:
    """Everything needed to reproduce inference, self-contained."""

    format_version: int
    syl_table: EmbeddingTable
    word_table: EmbeddingTable
    attr_vocab: AttributeVocab
    gen: GeneratorParams
    disc: DiscriminatorParams
    q: PosteriorParams
    opt_g: ad.AdamState
    opt_d: ad.AdamState
    opt_q: ad.AdamState
    step: int
    config: TrainConfig

    def __eq__(self, other):
        return isinstance(other, Checkpoint) and self.to_bytes() == other.to_bytes()

    def _tensor_walk(self) -> list[tuple[str, np.ndarray]]:
        out = [("emb.syllable", self.syl_table.vectors),
               ("emb.word", self.word_table.vectors)]
        for prefix, arrays in (("gen", self.gen.flatten()),
                               ("disc", self.disc.flatten()),
                               ("q", self.q.flatten())):
            out += [(f"{prefix}.{i}", a) for i, a in enumerate(arrays)]
        for prefix, state in (("opt_g", self.opt_g), ("opt_d", self.opt_d),
                              ("opt_q", self.opt_q)):
            out += [(f"{prefix}.m.{i}", a) for i, a in enumerate(state.first_moment)]
            out += [(f"{prefix}.v.{i}", a) for i, a in enumerate(state.second_moment)]
        return out

    def to_bytes(self) -> bytes:
        tensors = self._tensor_walk()
        header = {
            "format_version": self.format_version,
            "step": self.step,
            "config": asdict(self.config),
            "syllable_vocab": {"tokens": self.syl_table.vocab.token_of_id,
                               "counts": self.syl_table.vocab.counts},
            "word_vocab": {"tokens": self.word_table.vocab.token_of_id,
                           "counts": self.word_table.vocab.counts},
            "attributes": {"pitch": self.attr_vocab.pitch_values,
                           "duration": self.attr_vocab.duration_values,
                           "rest": self.attr_vocab.rest_values},
            "opt_steps": {"g": self.opt_g.step_count, "d": self.opt_d.step_count,
                          "q": self.opt_q.step_count},
            "tensors": [[name, list(a.shape)] for name, a in tensors],
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        body = bytearray()
        body += CHECKPOINT_MAGIC
        body += struct.pack("<IQ", CHECKPOINT_VERSION, len(head))
        body += head
        for _, a in tensors:
            body += np.ascontiguousarray(a, dtype="<f8").tobytes()
        body += hashlib.sha256(bytes(body)).digest()
        return bytes(body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < 48 or data[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError("bad magic: not a checkpoint blob")
        digest = data[-32:]
        if hashlib.sha256(data[:-32]).digest() != digest:
            raise CheckpointError("checksum failure: checkpoint is corrupted")
        version, head_len = struct.unpack("<IQ", data[4:16])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported version {version} "
                                  f"(this build reads {CHECKPOINT_VERSION})")
        header = json.loads(data[16:16 + head_len].decode("utf-8"))
        pos = 16 + head_len
        arrays = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * 8
            if pos + nbytes > len(data) - 32:
                raise CheckpointError(f"truncated tensor payload at {name}")
            arrays[name] = np.frombuffer(data[pos:pos + nbytes],
                                         dtype="<f8").reshape(shape).copy()
            pos += nbytes
        if pos != len(data) - 32:
            raise CheckpointError("trailing bytes after tensor payload")

        config = TrainConfig(**header["config"])
        attr = AttributeVocab(header["attributes"]["pitch"],
                              header["attributes"]["duration"],
                              header["attributes"]["rest"])

        def vocab_of(doc):
            tokens = doc["tokens"]
            return Vocab({t: i for i, t in enumerate(tokens)}, list(tokens),
                         list(doc["counts"]))

        syl = EmbeddingTable("syllable", config.embed_dim, arrays["emb.syllable"],
                             vocab_of(header["syllable_vocab"]))
        word = EmbeddingTable("word", config.embed_dim, arrays["emb.word"],
                              vocab_of(header["word_vocab"]))

        gen = GeneratorParams.init(attr, seed=0, hidden=config.hidden_size,
                                   proj=config.proj_size, noise_dim=config.noise_dim,
                                   layers=config.lstm_layers)
        disc = DiscriminatorParams.init(attr, seed=0, hidden=config.hidden_size,
                                        layers=config.lstm_layers)
        q = PosteriorParams.init(seed=0, hidden=config.q_hidden)
        for prefix, obj in (("gen", gen), ("disc", disc), ("q", q)):
            count = len(obj.flatten())
            obj.load([arrays[f"{prefix}.{i}"] for i in range(count)])

        def state_of(prefix, params, key):
            n = len(params)
            return ad.AdamState(header["opt_steps"][key],
                                [arrays[f"{prefix}.m.{i}"] for i in range(n)],
                                [arrays[f"{prefix}.v.{i}"] for i in range(n)])

        ckpt = cls(header["format_version"], syl, word, attr, gen, disc, q,
                   state_of("opt_g", gen.flatten(), "g"),
                   state_of("opt_d", disc.flatten(), "d"),
                   state_of("opt_q", q.flatten(), "q"),
                   header["step"], config)
        return ckpt

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return Checkpoint.from_bytes(fh.read())


def _train_embeddings(corpus: Corpus, config: TrainConfig):
    seqs = [e.seq for e in corpus.entries]
    base = SkipgramConfig(dim=config.embed_dim, window=config.sg_window,
                          negatives=config.sg_negatives, epochs=config.sg_epochs,
                          lr=config.sg_lr)
    syl = train_skipgram(seqs, "syllable",
                         SkipgramConfig(**{**asdict(base), "seed": config.seed * 2 + 1}))
    word = train_skipgram(seqs, "word",
                          SkipgramConfig(**{**asdict(base), "seed": config.seed * 2 + 2}))
    return syl, word


def _one_hots(entry: CorpusEntry, vocab: AttributeVocab):
    rows = []
    for col, size in enumerate(vocab.sizes):
        m = np.zeros((entry.melody.shape[0], size))
        m[np.arange(entry.melody.shape[0]), entry.melody[:, col]] = 1.0
        rows.append(m)
    return tuple(rows)


def _check_finite(value: float, step: int, component: str) -> float:
    if not math.isfinite(value):
        raise RuntimeError(f"non-finite {component} loss at step {step}: {value}")
    return value


def pretrain_generator(corpus: Corpus, config: TrainConfig,
                       params: GeneratorParams | None = None,
                       embeddings=None, steps: int | None = None) -> GeneratorParams:
    """Cross-entropy warm start of the generator heads on reference melodies."""
    steps = config.pretrain_steps if steps is None else steps
    if embeddings is None:
        embeddings = _train_embeddings(corpus, config)
    syl, word = embeddings
    gen = params or GeneratorParams.init(corpus.vocab, seed=config.seed + 11,
                                         hidden=config.hidden_size, proj=config.proj_size,
                                         noise_dim=config.noise_dim,
                                         layers=config.lstm_layers)
    if steps == 0:
        return gen
    xs = [encode(e.seq, syl, word).vectors for e in corpus.entries]
    masks = [_one_hots(e, corpus.vocab) for e in corpus.entries]
    rng = np.random.Generator(np.random.PCG64(config.seed + 17))
    arrays = gen.flatten()
    state = ad.AdamState.init(arrays)
    for step in range(steps):
        nodes = [ad.leaf(a) for a in arrays]
        idx = rng.integers(0, len(xs), size=config.batch_size)
        total = None
        for i in idx:
            t_steps = xs[i].shape[0]
            noise = rng.standard_normal((t_steps, config.noise_dim))
            out = generator_forward(xs[i], noise, gen, config.tau_start, rng, nodes)
            for name, mask in zip(ATTRIBUTES, masks[i]):
                picked = ad.sum_all(ad.mul(ad.const(mask), ad.log(out.dists[name])))
                term = ad.scale(picked, -1.0 / (3 * t_steps * len(idx)))
                total = term if total is None else ad.add(total, term)
        _check_finite(float(total.value), step, "pretrain cross-entropy")
        grads = ad.backward(total, nodes)
        g_list = ad.clip_global_norm([grads[n.nid] for n in nodes], config.grad_clip)
        arrays, state = ad.adam_step(arrays, g_list, state, lr=config.lr_g)
        gen.load(arrays)
    return gen


def train(corpus: Corpus, config: TrainConfig, embeddings=None,
          metrics_path=None, checkpoint_path=None, interval_hook=None) -> Checkpoint:
    """Full adversarial run; returns a self-contained checkpoint.

    interval_hook(step, checkpoint) fires at every checkpoint interval,
    e.g. for convergence tracking over training snapshots.
    """
    if not corpus.entries:
        raise ConfigError("cannot train on an empty corpus")
    if embeddings is None:
        embeddings = _train_embeddings(corpus, config)
    syl, word = embeddings

    vocab = corpus.vocab
    gen = GeneratorParams.init(vocab, seed=config.seed + 11, hidden=config.hidden_size,
                               proj=config.proj_size, noise_dim=config.noise_dim,
                               layers=config.lstm_layers)
    disc = DiscriminatorParams.init(vocab, seed=config.seed + 13,
                                    hidden=config.hidden_size, layers=config.lstm_layers)
    q = PosteriorParams.init(seed=config.seed + 19, hidden=config.q_hidden)
    if config.pretrain_steps:
        gen = pretrain_generator(corpus, config, params=gen, embeddings=embeddings)

    xs = [encode(e.seq, syl, word).vectors for e in corpus.entries]
    reals = [_one_hots(e, vocab) for e in corpus.entries]

    gen_arrays = gen.flatten()
    disc_arrays = disc.flatten()
    q_arrays = q.flatten()
    opt_g = ad.AdamState.init(gen_arrays)
    opt_d = ad.AdamState.init(disc_arrays)
    opt_q = ad.AdamState.init(q_arrays)

    rng = np.random.Generator(np.random.PCG64(config.seed + 23))
    metrics_rows = []

    def build_checkpoint(step):
        return Checkpoint(CHECKPOINT_VERSION, syl, word, vocab, gen, disc, q,
                          opt_g, opt_d, opt_q, step, config)

    for step in range(config.steps):
        tau = config.tau_at(step)

        loss_d_val = 0.0
        for _ in range(config.d_steps_per_g_step):
            d_nodes = [ad.leaf(a) for a in disc_arrays]
            idx = rng.integers(0, len(xs), size=config.batch_size)
            total = None
            for i in idx:
                t_steps = xs[i].shape[0]
                noise = rng.standard_normal((t_steps, config.noise_dim))
                out = generator_forward(xs[i], noise, gen, tau, rng)
                fake = tuple(ad.const(out.relaxed[a].value) for a in ATTRIBUTES)
                c_fake, _ = discriminator_forward(xs[i], fake, disc, d_nodes)
                c_real, _ = discriminator_forward(xs[i], reals[i], disc, d_nodes)
                term = ad.scale(rsgan_d_loss(c_real, c_fake), 1.0 / len(idx))
                total = term if total is None else ad.add(total, term)
            loss_d_val = _check_finite(float(total.value), step, "discriminator")
            grads = ad.backward(total, d_nodes)
            g_list = ad.clip_global_norm([grads[n.nid] for n in d_nodes], config.grad_clip)
            disc_arrays, opt_d = ad.adam_step(disc_arrays, g_list, opt_d, lr=config.lr_d)
            disc.load(disc_arrays)

        g_nodes = [ad.leaf(a) for a in gen_arrays]
        q_nodes = [ad.leaf(a) for a in q_arrays]
        idx = rng.integers(0, len(xs), size=config.batch_size)
        adv_total = None
        mi_total = None
        for i in idx:
            t_steps = xs[i].shape[0]
            noise = rng.standard_normal((t_steps, config.noise_dim))
            out = generator_forward(xs[i], noise, gen, tau, rng, g_nodes)
            fake = tuple(out.relaxed[a] for a in ATTRIBUTES)
            c_fake, _ = discriminator_forward(xs[i], fake, disc)
            c_real, _ = discriminator_forward(xs[i], reals[i], disc)
            adv = ad.scale(rsgan_g_loss(c_real, c_fake), 1.0 / len(idx))
            adv_total = adv if adv_total is None else ad.add(adv_total, adv)
            xhat, _ = q_forward(out.m_seq, q, q_nodes)
            mi_term = ad.scale(mi_lower_bound(xs[i], xhat),
                               -config.lambda_mi / len(idx))
            mi_total = mi_term if mi_total is None else ad.add(mi_total, mi_term)
        loss_g_val = _check_finite(float(adv_total.value), step, "generator")
        loss_mi_val = _check_finite(float(mi_total.value), step, "mutual information")
        total = ad.add(adv_total, mi_total)
        grads = ad.backward(total, g_nodes + q_nodes)
        joint = ad.clip_global_norm([grads[n.nid] for n in g_nodes + q_nodes],
                                    config.grad_clip)
        gen_arrays, opt_g = ad.adam_step(gen_arrays, joint[:len(g_nodes)], opt_g,
                                         lr=config.lr_g)
        q_arrays, opt_q = ad.adam_step(q_arrays, joint[len(g_nodes):], opt_q,
                                       lr=config.lr_q)
        gen.load(gen_arrays)
        q.load(q_arrays)

        if step % config.checkpoint_interval == 0 or step == config.steps - 1:
            metrics_rows.append((step, loss_d_val, loss_g_val, loss_mi_val, tau))
            for name, arrays in (("generator", gen_arrays),
                                 ("discriminator", disc_arrays), ("posterior", q_arrays)):
                if any(not np.isfinite(a).all() for a in arrays):
                    raise RuntimeError(f"non-finite {name} parameters at step {step}")
            if checkpoint_path is not None:
                save_checkpoint(build_checkpoint(step + 1), checkpoint_path)
            if interval_hook is not None:
                interval_hook(step + 1, build_checkpoint(step + 1))

    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            fh.write("step,loss_d,loss_g,loss_mi,tau\n")
            for row in metrics_rows:
                fh.write("{},{!r},{!r},{!r},{!r}\n".format(*row))

    ckpt = build_checkpoint(config.steps)
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return ckpt


def sample_melody(ckpt: Checkpoint, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one melody (attribute indices) by Gumbel-max sampling."""
    noise = rng.standard_normal((x.shape[0], ckpt.gen.noise_dim))
    out = generator_forward(x, noise, ckpt.gen, ckpt.config.tau_end, rng)
    cols = [np.argmax(out.relaxed[a].value, axis=1) for a in ATTRIBUTES]
    return np.stack(cols, axis=1)


def evaluate(ckpt: Checkpoint, corpus: Corpus, seed: int = 0,
             samples: int = 1000) -> dict:
    """Marginal TV distances, critic scores, and reconstruction error."""
    rng = np.random.Generator(np.random.PCG64(seed))
    xs = [encode(e.seq, ckpt.syl_table, ckpt.word_table).vectors
          for e in corpus.entries]

    data_counts = [np.zeros(s) for s in ckpt.attr_vocab.sizes]
    for e in corpus.entries:
        for col in range(3):
            np.add.at(data_counts[col], e.melody[:, col], 1.0)

    gen_counts = [np.zeros(s) for s in ckpt.attr_vocab.sizes]
    for s in range(samples):
        i = s % len(xs)
        melody = sample_melody(ckpt, xs[i], rng)
        for col in range(3):
            np.add.at(gen_counts[col], melody[:, col], 1.0)

    tv = {}
    for name, d, g in zip(ATTRIBUTES, data_counts, gen_counts):
        p = d / d.sum()
        q_dist = g / g.sum()
        tv[name] = 0.5 * float(np.abs(p - q_dist).sum())

    real_scores, fake_scores, mses = [], [], []
    for i, e in enumerate(corpus.entries):
        reals = _one_hots(e, ckpt.attr_vocab)
        c_real, _ = discriminator_forward(xs[i], reals, ckpt.disc)
        real_scores.append(float(c_real.value))
        noise = rng.standard_normal((xs[i].shape[0], ckpt.gen.noise_dim))
        out = generator_forward(xs[i], noise, ckpt.gen, ckpt.config.tau_end, rng)
        fake = tuple(out.relaxed[a] for a in ATTRIBUTES)
        c_fake, _ = discriminator_forward(xs[i], fake, ckpt.disc)
        fake_scores.append(float(c_fake.value))
        xhat, _ = q_forward(out.m_seq, ckpt.q)
        mses.append(-2.0 * float(mi_lower_bound(xs[i], xhat).value))

    return {
        "tv_distance": tv,
        "critic_real_mean": float(np.mean(real_scores)),
        "critic_fake_mean": float(np.mean(fake_scores)),
        "mi_reconstruction_mse": float(np.mean(mses)),
    }
