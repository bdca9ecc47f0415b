"""Memorability-driven style seed recommendation.

Pipeline stages: score images for memorability, synthesize stylized
variants from a catalog of style seeds, learn to predict per-seed
memorability gains from partially observed gap data, and serve ranked
seed recommendations.
"""

__version__ = "0.1.0"
