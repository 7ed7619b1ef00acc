"""Verification of guarded-command models by concrete search with abstract matching."""

__version__ = "0.1.0"
