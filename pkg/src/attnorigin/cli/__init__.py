"""Command-line surface and report rendering."""

from .main import main

__all__ = ["main"]
