"""Adaptive Siamese tracking with generative template update and change detection."""

__version__ = "0.1.0"
