"""Shared exception base for the credal package."""


class CredalError(Exception):
    """Base class for all errors raised by this package."""
