"""Adaptive weighted twin-critic deterministic policy gradients at desk scale."""

__version__ = "0.1.0"
