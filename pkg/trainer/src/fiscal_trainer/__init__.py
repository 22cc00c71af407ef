"""Low-rank adapter fine-tuning for single-token claim verification."""

__version__ = "0.1.0"
