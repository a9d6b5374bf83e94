"""Learned sparse retrieval at desk scale.

Trains a term-importance encoder that re-weights and expands documents into
vocabulary-sized sparse vectors, indexes them into an inverted index, and
measures the effectiveness/efficiency tradeoff of the resulting retrieval.
"""

__version__ = "0.1.0"
