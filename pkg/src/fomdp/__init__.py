"""Symbolic linear value approximation for first-order MDPs."""

__version__ = "0.1.0"
