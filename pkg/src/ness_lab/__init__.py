"""Steady states of a driven sparse level chain coupled to a thermal bath."""

__version__ = "0.1.0"
