"""Regional frequency dynamics and frequency-security constraints."""

__version__ = "0.1.0"
