"""ridectl - supply management for ridesourcing regions."""

__version__ = "0.0.0-dev"
