"""Deterministic simulator of a phone-number-driven targeted-attack pipeline.

Everything runs against a synthetic population; no real service is contacted.
"""

__version__ = "0.1.0"
