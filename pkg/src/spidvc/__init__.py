"""Multi-view distributed video codec with spatially interleaved KEY and
Wyner-Ziv blocks."""

__version__ = "0.1.0"
