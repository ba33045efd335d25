"""Gamma-ray source localization with detector arrays.

Simulate per-detector counts, scale features, and predict source angle and
distance with a reference-table baseline or one of five classifiers.
"""

__version__ = "0.1.0"
