"""Burgers vortices in a strained flow: construction, propagators, stability runs."""

__version__ = "0.1.0"
