"""Uncertainty-driven anomaly segmentation for layered scans.

Training a dropout-equipped encoder-decoder on healthy layered phantoms,
estimating per-pixel model uncertainty with stochastic forward passes, and
turning the uncertainty maps into compact anomaly masks with an iterated
ray-casting vote.
"""

__version__ = "0.1.0"
