"""Extrapolation weights and extrapolated points for fixed-point iterates.

Two equivalent formulations are provided: a Tikhonov-regularized weighted
least-squares solve on the residual matrix (``rna_coefficients``), and a
hard norm-ball constraint on the weights (``cna_coefficients``). The two
are linked by a one-dimensional dual search (``lambda_from_tau``).

Conventions: the history holds pairs (x_j, y_{j-1}) with x_j = g(y_{j-1}),
residual columns are r_j = x_j - y_{j-1}, and the extrapolated point is
``Y c + eta * R c`` so that eta=1 recombines the images ``X c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import spectral_norm, sym_solve_shifted

DEFAULT_LAMBDA = 1e-8      # relative weight multiplying ||R||_2^2
DEFAULT_WINDOW = 10
LAMBDA_FLOOR = 1e-16
LAMBDA_CAP = 1e12          # returned (with a flag) when the averaging limit is hit
PIVOT_RTOL = 1e-14         # numerical invertibility threshold on R^T R


class EmptyWindow(Exception):
    """The iterate history holds no pairs yet."""


class DimensionMismatch(Exception):
    """Coefficient vector does not match the window width."""


class SingularSystem(Exception):
    """R^T R is numerically singular with lambda = 0 and the window has
    not converged; retry with a positive regularization weight."""


class IterateWindow:
    """Bounded FIFO history of paired iterates (x_j, y_{j-1}).

    Column j of X is x_j and column j of Y is y_{j-1}; the oldest pair is
    evicted once ``capacity`` is exceeded. ``capacity=None`` keeps the
    full history.
    """

    def __init__(self, capacity=None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._xs = []
        self._ys = []
        self._cache = None  # (X, Y) rebuilt lazily after each push

    def push(self, x, y_prev):
        x = np.asarray(x, dtype=float)
        y_prev = np.asarray(y_prev, dtype=float)
        if x.shape != y_prev.shape:
            raise DimensionMismatch("x and y must have identical shapes")
        self._xs.append(x.copy())
        self._ys.append(y_prev.copy())
        if self.capacity is not None and len(self._xs) > self.capacity:
            self._xs.pop(0)
            self._ys.pop(0)
        self._cache = None

    @property
    def width(self):
        return len(self._xs)

    def __len__(self):
        return len(self._xs)

    def _stacked(self):
        if not self._xs:
            raise EmptyWindow("no iterates recorded")
        if self._cache is None:
            # transposed views of freshly-owned arrays; treated as read-only
            self._cache = (np.array(self._xs).T, np.array(self._ys).T)
        return self._cache

    @property
    def X(self):
        return self._stacked()[0]

    @property
    def Y(self):
        return self._stacked()[1]

    def copy(self):
        out = IterateWindow(self.capacity)
        out._xs = [x.copy() for x in self._xs]
        out._ys = [y.copy() for y in self._ys]
        return out


@dataclass(frozen=True)
class ExtrapolationCoefficients:
    """Normalized combination weights plus the parameters that produced them."""

    c: np.ndarray
    lam: float
    tau: float = np.inf
    eta: float = 1.0
    averaging_regime: bool = False    # lambda hit its cap (tau ~ 0)
    converged_window: bool = False    # residual matrix numerically annihilated

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))


def residuals(window: IterateWindow) -> np.ndarray:
    """Residual matrix R = X - Y, column j equal to x_j - y_{j-1}."""
    if len(window) == 0:
        raise EmptyWindow("cannot form residuals of an empty window")
    return window.X - window.Y


def _affine_basis(n):
    # orthonormal basis of {v : 1^T v = 0}
    q, _ = np.linalg.qr(np.ones((n, 1)), mode="complete")
    return q[:, 1:]


def _min_residual_combination(R, shift=0.0):
    """Minimize ||R c|| (plus optional Tikhonov term) subject to sum(c) = 1.

    Solved through an orthonormal parametrization of the affine constraint
    and a least-squares solve on R itself, which is numerically much
    gentler than forming R^T R. With ``shift`` > 0 the stacked system
    reproduces the regularized solve exactly.
    """
    d, n = R.shape
    if n == 1:
        return np.array([1.0])
    c0 = np.full(n, 1.0 / n)
    Z = _affine_basis(n)
    if shift > 0.0:
        A = np.vstack([R, np.sqrt(shift) * np.eye(n)])
    else:
        A = R
    u, *_ = np.linalg.lstsq(A @ Z, -A @ c0, rcond=None)
    return c0 + Z @ u


def rna_coefficients(R, lam, eta=1.0):
    """Combination weights from the regularized residual system.

    ``lam`` is a relative weight: the solved system is
    (R^T R + lam*||R||_2^2 I) c = 1, normalized so the weights sum to one.
    With ``lam=0`` and a numerically rank-deficient R the minimizer is
    still returned when it annihilates the residuals (converged window);
    otherwise SingularSystem is raised so the caller can bump ``lam``.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.size == 0:
        raise EmptyWindow("residual matrix must be a nonempty 2-d array")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    d, n = R.shape
    if not R.any():
        # fixed point already reached; averaging is the canonical choice
        return ExtrapolationCoefficients(
            np.full(n, 1.0 / n), lam=lam, eta=eta, converged_window=True)

    gram = R.T @ R
    norm_sq = spectral_norm(gram)  # = ||R||_2^2
    ones = np.ones(n)
    if lam > 0.0:
        v = sym_solve_shifted(gram, lam * norm_sq, ones)
        total = float(ones @ v)
        if total <= 0.0:
            raise SingularSystem("normalization sum is nonpositive")
        return ExtrapolationCoefficients(v / total, lam=lam, eta=eta)

    # lam = 0: solve the unshifted normal equations when numerically
    # invertible (min pivot above 1e-14 * ||R^T R||)
    try:
        factor = np.linalg.cholesky(gram)
        invertible = np.diag(factor).min() ** 2 > PIVOT_RTOL * norm_sq
    except np.linalg.LinAlgError:
        invertible = False
    if invertible:
        v = sym_solve_shifted(gram, 0.0, ones)
        total = float(ones @ v)
        if total > 0.0:
            return ExtrapolationCoefficients(v / total, lam=0.0, eta=eta)
        invertible = False
    # breakdown: the window either already annihilates the residuals (a
    # converged Krylov history) or genuinely needs regularization
    c = _min_residual_combination(R)
    if np.linalg.norm(R @ c) <= 1e-8 * np.sqrt(norm_sq):
        return ExtrapolationCoefficients(
            c, lam=0.0, eta=eta, converged_window=True)
    raise SingularSystem(
        "R^T R numerically singular with lam = 0; retry with lam > 0")


def extrapolate_point(window: IterateWindow, coeffs: ExtrapolationCoefficients):
    """Extrapolated point Y c + eta * R c (eta = 1 recombines the x_j)."""
    c = coeffs.c
    if len(c) != window.width:
        raise DimensionMismatch(
            f"{len(c)} coefficients for a window of width {window.width}")
    total = float(c.sum())
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"coefficients sum to {total}, expected 1")
    Y = window.Y
    R = window.X - Y
    return Y @ c + coeffs.eta * (R @ c)


def coefficient_norm_bound(lam, n):
    """Upper bound sqrt(1 + 1/lam)/sqrt(n) on the weight norm for lam > 0."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    return np.sqrt(1.0 + 1.0 / lam) / np.sqrt(n)


def _weight_norm(R, lam):
    try:
        return float(np.linalg.norm(rna_coefficients(R, lam).c))
    except SingularSystem:
        return float(np.linalg.norm(rna_coefficients(R, LAMBDA_FLOOR).c))


def lambda_from_tau(R, tau):
    """Regularization weight whose solution saturates the tau norm ball.

    Returns 0 when the unregularized weights are already feasible. The
    target norm (1+tau)/sqrt(N) is matched within 1e-8 by bisection on
    log(lambda) (the weight norm is nonincreasing in lambda). When the
    target sits at the averaging limit 1/sqrt(N) (tau = 0) the capped
    value LAMBDA_CAP is returned.
    """
    R = np.asarray(R, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    n = R.shape[1]
    target = (1.0 + tau) / np.sqrt(n)
    if np.isinf(tau):
        return 0.0
    if n > 1 and tau <= 1e-12:
        # the target sits at the averaging infimum, reached only as
        # lambda grows without bound
        return LAMBDA_CAP
    try:
        if np.linalg.norm(rna_coefficients(R, 0.0).c) <= target + 1e-12:
            return 0.0
    except SingularSystem:
        pass
    lo, hi = LAMBDA_FLOOR, LAMBDA_CAP
    if _weight_norm(R, lo) <= target + 1e-12:
        return lo
    if _weight_norm(R, hi) > target:
        return LAMBDA_CAP
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        val = _weight_norm(R, mid)
        if abs(val**2 - target**2) <= 1e-12 * max(target**2, 1.0):
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    return np.sqrt(lo * hi)


def cna_coefficients(R, tau, eta=1.0):
    """Weights minimizing ||R c|| under sum(c)=1 and ||c|| <= (1+tau)/sqrt(N).

    Computed through the dual search of ``lambda_from_tau``; tau=0 always
    yields plain averaging and tau=inf reproduces the unregularized
    weights.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.size == 0:
        raise EmptyWindow("residual matrix must be a nonempty 2-d array")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    n = R.shape[1]
    if tau == 0.0 or n == 1:
        c = np.full(n, 1.0 / n)
        return ExtrapolationCoefficients(
            c, lam=LAMBDA_CAP if tau == 0.0 and n > 1 else 0.0, tau=tau,
            eta=eta, averaging_regime=tau == 0.0 and n > 1)
    lam = lambda_from_tau(R, tau)
    try:
        base = rna_coefficients(R, lam, eta=eta)
    except SingularSystem:
        lam = LAMBDA_FLOOR
        base = rna_coefficients(R, lam, eta=eta)
    return ExtrapolationCoefficients(
        base.c, lam=lam, tau=tau, eta=eta,
        averaging_regime=lam >= LAMBDA_CAP,
        converged_window=base.converged_window)
