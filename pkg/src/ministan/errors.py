"""Shared exception base for the ministan package."""


class MiniStanError(Exception):
    """Base class for every domain error raised by this package."""
