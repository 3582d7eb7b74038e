"""Region-specific physics-informed prediction of stress-strain curves."""

__version__ = "0.1.0"
