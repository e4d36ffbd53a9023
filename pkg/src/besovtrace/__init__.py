"""Besov spaces, Whitney extension, trace and interpolation on discretized metric measure spaces."""

__version__ = "0.1.0"
