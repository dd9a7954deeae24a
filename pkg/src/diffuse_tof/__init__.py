"""Differentiable transient-histogram rendering and scene recovery for diffuse ToF sensors."""

__version__ = "0.1.0"
