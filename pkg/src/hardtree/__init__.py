"""Exact and simulated analysis of the hard-core model on complete b-ary trees."""

__version__ = "0.1.0"
