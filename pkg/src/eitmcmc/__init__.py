"""Delayed-acceptance and multivariate MCMC for computationally intensive
Bayesian inverse problems, demonstrated on synthetic electrical impedance
tomography."""

__version__ = "0.1.0"
