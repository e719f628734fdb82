"""Multilingual fact-check retrieval and claim matching toolkit."""

__version__ = "0.1.0"
