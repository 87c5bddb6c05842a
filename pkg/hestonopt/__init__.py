"""
hestonopt
Closed-form optimal investment under Heston stochastic volatility, with PDE
and Monte Carlo verification
"""

__version__ = "1.0.0"
