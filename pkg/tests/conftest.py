import numpy as np
import pytest

from songsmith.data import toy_corpus_path
from songsmith.gan import AttributeVocab
from songsmith.lyrics import tokenize_lyrics
from songsmith.training import Corpus, CorpusEntry, TrainConfig, load_corpus, train


def tiny_config(**overrides) -> TrainConfig:
    base = dict(seed=0, batch_size=2, steps=6, hidden_size=10, proj_size=8,
                noise_dim=4, lstm_layers=1, q_hidden=12, checkpoint_interval=3,
                sg_epochs=3, sg_negatives=2, embed_dim=10)
    base.update(overrides)
    return TrainConfig(**base)


def constant_melody_corpus(n_entries=12) -> Corpus:
    """Single lyric, identical melody everywhere; the easy GAN target."""
    vocab = AttributeVocab(pitch_values=[60, 64, 67], duration_values=[0.5, 1.0],
                           rest_values=[0.0, 1.0])
    seq = tokenize_lyrics("la di da la")
    melody = np.array([[0, 1, 0], [1, 1, 0], [2, 0, 0], [0, 1, 0]])
    entries = [CorpusEntry(seq, melody.copy()) for _ in range(n_entries)]
    return Corpus(entries, vocab)


@pytest.fixture(scope="session")
def toy_corpus() -> Corpus:
    return load_corpus(toy_corpus_path())


@pytest.fixture(scope="session")
def small_checkpoint():
    """A briefly trained checkpoint over a tiny two-song corpus."""
    vocab = AttributeVocab(pitch_values=[60, 62, 64, 67], duration_values=[0.5, 1.0],
                           rest_values=[0.0, 0.5])
    entries = []
    for text, pitches in (("twinkle twinkle little star", [0, 0, 3, 3, 2, 2, 3]),
                          ("hello little world", [1, 1, 2, 2, 0])):
        seq = tokenize_lyrics(text)
        melody = np.stack([pitches, [1] * len(pitches), [0] * len(pitches)], axis=1)
        entries.append(CorpusEntry(seq, melody))
    corpus = Corpus(entries, vocab)
    return train(corpus, tiny_config(steps=8))
