"""Plausibility scoring of homonym senses in short narratives."""

__version__ = "0.1.0"
