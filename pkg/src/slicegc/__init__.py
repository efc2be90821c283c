"""Parametric trace slicing with statically inserted garbage events."""

from importlib import resources

__version__ = "0.1.0"


def corpus_path(*parts: str):
    """Path to a bundled corpus file (specs, programs, traces)."""
    return resources.files(__name__).joinpath("corpus", *parts)
