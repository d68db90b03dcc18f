"""Computational music aesthetics: basic features, an order/complexity
aesthetic model, and an aesthetic-aware sequential recommender."""

__version__ = "0.1.0"
