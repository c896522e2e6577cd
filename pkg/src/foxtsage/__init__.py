"""Foxtsage: population-based learning-rate search on top of SGD, with SGD and
Adam baselines and the metrics used to compare them."""

__version__ = "0.1.0"
