"""Paired trajectory-offset video generation: geometry, physics, placement, rendering, evaluation."""

__version__ = "0.1.0"
