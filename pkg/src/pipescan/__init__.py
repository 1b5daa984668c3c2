"""Structured-light measurement chain for pipe interiors."""

__version__ = "0.1.0"
