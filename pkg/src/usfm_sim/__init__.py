"""Baseband simulator for joint sequency-frequency multicarrier links."""

__version__ = "0.1.0"
