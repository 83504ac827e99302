"""Optimal quantity-of-interest selection for measure-theoretic stochastic inverse problems."""
__version__ = "0.1.0"
