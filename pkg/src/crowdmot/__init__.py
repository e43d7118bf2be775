"""Crowdsourced multiple-object tracking annotation toolkit."""

__version__ = "0.1.0"
