"""Bias diagnostics for linear mixed models with a stochastic random-effects design."""

__version__ = "0.1.0"
