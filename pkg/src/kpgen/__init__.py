"""Retrieval-guided keyphrase extraction and generation."""

__version__ = "0.1.0"
