"""Parallel Glauber dynamics on the random-graph clique model: sampling, annealed thermodynamics and experiments."""

__version__ = "0.1.0"
