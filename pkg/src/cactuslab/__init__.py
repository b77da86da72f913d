"""Simulation toolkit for biased random walks on critical Galton-Watson
trees, their discrete snakes and their scaling limits."""
__version__ = "0.1.0"
