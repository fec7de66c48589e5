"""Exact-simulation laboratory for explicit, implicit and data re-uploading quantum models."""

__version__ = "0.1.0"
