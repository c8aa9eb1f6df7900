"""Spectral Galerkin simulation of damped stochastic wave equations and their small-mass limit."""

__version__ = "0.1.0"
