"""Corpus augmentation for distant-talk speech recognition training data."""

__version__ = "0.1.0"
