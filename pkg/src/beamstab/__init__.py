"""Boundary stabilization of coupled Euler-Bernoulli beams with tip masses."""
__version__ = "0.1.0"
