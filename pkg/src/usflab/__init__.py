"""Exact finite-scale laboratory for wired and free uniform spanning forests."""

__version__ = "0.1.0"
