"""Singular-value analysis of electrode-array electrograms."""

__version__ = "0.1.0"
