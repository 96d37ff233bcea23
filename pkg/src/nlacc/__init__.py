"""Convergence acceleration toolkit.

Extrapolates iterates of first-order methods (gradient descent, momentum,
primal-dual splitting) through regularized or norm-constrained nonlinear
averaging, and analyzes when acceleration can work via numerical ranges
and Chebyshev minimax bounds.
"""

from .extrapolate import (IterateWindow, cna_coefficients, extrapolate_point,
                          lambda_from_tau, residuals, rna_coefficients)

__all__ = [
    "IterateWindow",
    "residuals",
    "rna_coefficients",
    "cna_coefficients",
    "lambda_from_tau",
    "extrapolate_point",
]

__version__ = "0.1.0"
