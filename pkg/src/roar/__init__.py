"""Reinforcement-learned control of the original-to-augmented data ratio."""

__version__ = "0.1.0"
