"""Relative voice impression estimation toolkit."""

__version__ = "0.1.0"
