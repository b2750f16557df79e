"""Bundled data files."""

from importlib import resources


def toy_corpus_path():
    """Filesystem path of the bundled nursery-style training corpus."""
    return resources.files(__package__) / "toy_corpus.jsonl"
