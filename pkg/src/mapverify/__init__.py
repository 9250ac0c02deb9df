"""Rule-based verification of lanelet maps with elevation."""

__version__ = "0.1.0"
