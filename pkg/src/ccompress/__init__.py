"""Information-theoretic compression of two-party communication protocols."""
__version__ = "0.1.0"
