"""Tractable image-to-image Schrodinger bridge at desk scale."""

__version__ = "0.1.0"
