"""Self-supervised learning from longitudinal egocentric video, with linear probing and representation analysis."""

__version__ = "0.1.0"
