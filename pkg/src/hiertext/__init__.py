"""Hierarchical text extraction: MSER regions grouped by single linkage
clustering, verified by a boosted classifier and an a-contrario stopping rule."""

__version__ = "0.1.0"
