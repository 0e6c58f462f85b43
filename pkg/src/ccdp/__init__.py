"""Failure-aware composed diffusion policies on scripted 2D tasks."""

__version__ = "0.1.0"
