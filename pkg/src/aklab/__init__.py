"""Numerical laboratory for anticipating stochastic calculus.

Modules
-------
paths     Brownian trajectories on refinable grids and the shift algebra.
ayed_kuo  Riemann-sum evaluation of the anticipating integral.
lsde      Closed-form and braiding solvers for the anticipating linear equation.
nearmart  Near-martingale regression tests and optional stopping.
ldp       Contraction map, rate functions and rare-event Monte Carlo.
cli       Configuration-driven experiment runner.
"""

__version__ = "0.1.0"

DEFAULT_SEED = 20240601
