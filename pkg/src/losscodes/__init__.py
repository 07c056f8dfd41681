"""Multiplexed loss-channel encodings and probabilistic distillation maps."""

__version__ = "0.1.0"
