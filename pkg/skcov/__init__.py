"""Exact and Monte Carlo laboratory for the Sherrington-Kirkpatrick Gibbs covariance."""

__version__ = "0.1.0"
