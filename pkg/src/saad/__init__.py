"""Hybrid anomaly labeling: histogram-based artificial labels, a small
fully connected classifier, and a confidence-gated rule combining the two."""

__version__ = "0.1.0"
