"""Desk-scale food image recognition platform.

Taxonomy management, deterministic synthetic corpora, focal-loss training
of a small conv net, a classify/feedback HTTP API, production analytics
and an annotation workflow that versions the training set.
"""

__version__ = "0.1.0"
