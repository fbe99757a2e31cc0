"""Rare-event Monte Carlo estimation with bootstrap input-uncertainty intervals."""

__version__ = "0.1.0"
