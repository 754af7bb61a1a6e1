"""Randomised inhibitory sampling designs for geostatistical prediction."""

__version__ = "0.1.0"
