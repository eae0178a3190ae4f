"""Interventional graph neural networks and the iVGAE neural-causal model."""
__version__ = "0.1.0"
