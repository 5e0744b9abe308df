"""Platoon mobility-trace synthesis and transformer-based misbehavior detection."""

__version__ = "0.1.0"
