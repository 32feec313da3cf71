"""Layered RNS homomorphic encryption library with a private-query engine."""

__version__ = "0.1.0"
