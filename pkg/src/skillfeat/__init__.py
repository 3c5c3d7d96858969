"""Feature relevance learning for feature-parameterized motor skills."""

__version__ = "0.1.0"
