"""Corpus loading, checkpoint serialization, and training-loop contracts.

Long-horizon convergence properties live in test_acceptance; here the
loop is exercised just far enough to pin its contracts.
"""

import numpy as np
import pytest

from songsmith.errors import CheckpointError, ConfigError, CorpusFormatError
from songsmith.gan import AttributeVocab
from songsmith.training import (Checkpoint, TrainConfig, evaluate, load_corpus,
                                pretrain_generator, save_checkpoint,
                                load_checkpoint, train)
from tests.conftest import constant_melody_corpus, tiny_config


def test_toy_corpus_loads_clean(toy_corpus):
    assert len(toy_corpus) >= 16
    for e in toy_corpus.entries:
        assert e.melody.shape == (len(e.seq.syllables), 3)


def test_corpus_alignment_error_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"lyrics": "hello world", "notes": [{"pitch": 60, '
                    '"duration": 1.0, "rest": 0.0}]}\n')
    with pytest.raises(CorpusFormatError) as exc:
        load_corpus(path)
    msg = str(exc.value)
    assert "line 1" in msg and "3 syllables" in msg and "1 notes" in msg


def test_corpus_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(CorpusFormatError) as exc:
        load_corpus(path)
    assert "empty corpus" in str(exc.value)


def test_corpus_parse_error_position(tmp_path):
    path = tmp_path / "parse.jsonl"
    path.write_text('{"lyrics": oops}\n')
    with pytest.raises(CorpusFormatError) as exc:
        load_corpus(path)
    assert "line 1" in str(exc.value) and "column" in str(exc.value)


def test_corpus_unknown_attribute_value(tmp_path):
    path = tmp_path / "value.jsonl"
    path.write_text('{"lyrics": "sun", "notes": [{"pitch": 60, "duration": 0.33, '
                    '"rest": 0.0}]}\n')
    with pytest.raises(CorpusFormatError) as exc:
        load_corpus(path)
    assert "0.33" in str(exc.value) and "line 1" in str(exc.value)


def test_train_zero_steps_returns_init(toy_corpus):
    ckpt = train(constant_melody_corpus(), tiny_config(steps=0))
    assert ckpt.step == 0
    assert ckpt.opt_g.step_count == 0


def test_train_deterministic_checkpoint_bytes():
    corpus = constant_melody_corpus()
    c1 = train(corpus, tiny_config(steps=4))
    c2 = train(corpus, tiny_config(steps=4))
    assert c1.to_bytes() == c2.to_bytes()
    assert c1 == c2


def test_train_metrics_csv(tmp_path):
    corpus = constant_melody_corpus()
    metrics = tmp_path / "metrics.csv"
    train(corpus, tiny_config(steps=4, checkpoint_interval=2), metrics_path=metrics)
    lines = metrics.read_text().strip().split("\n")
    assert lines[0] == "step,loss_d,loss_g,loss_mi,tau"
    assert len(lines) >= 3
    for line in lines[1:]:
        cols = line.split(",")
        assert len(cols) == 5
        assert all(np.isfinite(float(c)) for c in cols)


def test_train_interval_hook_fires():
    seen = []
    train(constant_melody_corpus(), tiny_config(steps=4, checkpoint_interval=2),
          interval_hook=lambda step, ckpt: seen.append((step, ckpt.step)))
    assert seen and all(s == c for s, c in seen)


def test_checkpoint_round_trip(tmp_path, small_checkpoint):
    path = tmp_path / "model.ckpt"
    save_checkpoint(small_checkpoint, path)
    again = load_checkpoint(path)
    assert again == small_checkpoint
    assert again.to_bytes() == small_checkpoint.to_bytes()
    assert again.fingerprint() == small_checkpoint.fingerprint()


def test_checkpoint_corruption_detected(tmp_path, small_checkpoint):
    blob = bytearray(small_checkpoint.to_bytes())
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(CheckpointError) as exc:
        Checkpoint.from_bytes(bytes(blob))
    assert "checksum" in str(exc.value)


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError) as exc:
        Checkpoint.from_bytes(b"NOPE" + b"\0" * 64)
    assert "magic" in str(exc.value)


def test_checkpoint_future_version(small_checkpoint):
    import hashlib
    blob = bytearray(small_checkpoint.to_bytes()[:-32])
    blob[4] = 99  # bump the little-endian version field
    blob += hashlib.sha256(bytes(blob)).digest()
    with pytest.raises(CheckpointError) as exc:
        Checkpoint.from_bytes(bytes(blob))
    assert "version" in str(exc.value)


def test_pretrain_zero_steps_unchanged():
    corpus = constant_melody_corpus()
    cfg = tiny_config()
    gen = pretrain_generator(corpus, cfg, steps=0)
    gen2 = pretrain_generator(corpus, cfg, steps=0)
    assert all(np.array_equal(a, b) for a, b in zip(gen.flatten(), gen2.flatten()))


def test_pretrain_lowers_cross_entropy():
    corpus = constant_melody_corpus()
    cfg = tiny_config(steps=0, batch_size=4)

    def mean_ce(gen):
        from songsmith import autodiff as ad
        from songsmith.gan import ATTRIBUTES, generator_forward
        from songsmith.lyrics import encode
        from songsmith.training import _one_hots, _train_embeddings
        syl, word = _train_embeddings(corpus, cfg)
        total = 0.0
        for e in corpus.entries[:4]:
            x = encode(e.seq, syl, word).vectors
            rng = np.random.Generator(np.random.PCG64(5))
            noise = rng.standard_normal((x.shape[0], cfg.noise_dim))
            out = generator_forward(x, noise, gen, 1.0, rng)
            for name, mask in zip(ATTRIBUTES, _one_hots(e, corpus.vocab)):
                picked = (mask * np.log(out.dists[name].value)).sum()
                total -= picked / (3 * x.shape[0])
        return total / 4

    init = pretrain_generator(corpus, cfg, steps=0)
    trained = pretrain_generator(corpus, cfg, steps=300)
    assert mean_ce(trained) < mean_ce(init)


def test_pretrain_one_class_corpus_concentrates():
    corpus = constant_melody_corpus()
    for e in corpus.entries:
        e.melody[:, 0] = 1  # every pitch is class 1
    cfg = tiny_config(steps=0, batch_size=4)
    gen = pretrain_generator(corpus, cfg, steps=400)

    from songsmith.gan import generator_forward
    from songsmith.lyrics import encode
    from songsmith.training import _train_embeddings
    syl, word = _train_embeddings(corpus, cfg)
    e = corpus.entries[0]
    x = encode(e.seq, syl, word).vectors
    rng = np.random.Generator(np.random.PCG64(3))
    out = generator_forward(x, rng.standard_normal((4, cfg.noise_dim)), gen, 1.0, rng)
    probs = out.dists["pitch"].value
    assert (probs[:, 1] > 0.9).all()


def test_evaluate_ranges_and_determinism(small_checkpoint):
    corpus = constant_melody_corpus(4)
    vocab = AttributeVocab(pitch_values=[60, 62, 64, 67], duration_values=[0.5, 1.0],
                           rest_values=[0.0, 0.5])
    corpus.vocab = vocab
    for e in corpus.entries:
        e.melody = np.clip(e.melody, 0, 1)
    m1 = evaluate(small_checkpoint, corpus, seed=4, samples=40)
    m2 = evaluate(small_checkpoint, corpus, seed=4, samples=40)
    assert m1 == m2
    for tv in m1["tv_distance"].values():
        assert 0.0 <= tv <= 1.0
    assert np.isfinite(m1["mi_reconstruction_mse"])


def test_train_rejects_bad_config():
    with pytest.raises(ConfigError):
        TrainConfig(lr_g=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(tau_start=0.1, tau_end=0.5)
