"""Deterministic simulator for zoned, semantic, ledger-backed service discovery."""

__version__ = "0.1.0"
