"""Handwritten-term recognition from multi-channel pen sensor streams."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    ALPHABET,
    N_CHANNELS,
    N_CLASSES,
    CharClass,
    Recording,
    Segment,
    char_to_class,
    class_to_char,
    load_corpus,
    one_hot,
    save_corpus,
)
