"""Shuffle-based diagnostics of sequential structure in user-item interaction logs."""

__version__ = "0.1.0"
