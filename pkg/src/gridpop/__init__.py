"""Census-independent gridded population estimation."""

__version__ = "0.1.0"
