"""Rare-event point processes for interval maps."""
__version__ = "0.1.0"
