"""Feedback capacity of stationary ARMA Gaussian channels."""

__version__ = "0.1.0"
