"""Common error base for everything deckforge raises on bad input."""


class DeckforgeError(Exception):
    """Base class for all deckforge-specific errors."""
