"""Learned image compression for machine consumers, trained with task losses."""

__version__ = "0.1.0"
