"""Online acceleration: extrapolate at every step and feed the point back.

Three wrappers live here. The plain online scheme replaces y_i by the
extrapolated point after each update. The guarded momentum variant
reconstructs the "conditional point" that the base combination would
have to produce for the extrapolation to be admissible, and only accepts
the extrapolated point when a user-supplied descent condition passes.
The adaptive method specializes the guard to the classical momentum
recursion, giving a scheme that keeps the optimal worst-case rate while
usually doing much better.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drivers import CombinationRow, FixedPointOperator, NesterovParams
from .extrapolate import (DEFAULT_LAMBDA, DEFAULT_WINDOW, IterateWindow,
                          SingularSystem, extrapolate_point, residuals,
                          rna_coefficients)


class ZeroLeadingCoefficient(Exception):
    """The base combination puts zero weight on the newest iterate."""


class LastCoefficientStatus:
    NONZERO_LAST = "nonzero_last"
    RANK_DEFICIENT_CONVERGED = "rank_deficient_converged"


@dataclass
class RegularizationSchedule:
    """Power-law schedule lambda = D^r driven by a distance proxy."""

    exponent_r: float
    exponent_s: float = 0.0
    distance_proxy: object = None

    def __post_init__(self):
        if self.exponent_r < 0 or self.exponent_s < 0:
            raise ValueError("exponents must be nonnegative")


def schedule_lambda(schedule: RegularizationSchedule, d_estimate):
    """Regularization weight D^r for the current distance estimate."""
    if d_estimate <= 0:
        raise ValueError("distance estimate must be positive")
    return float(d_estimate**schedule.exponent_r)


@dataclass
class OnlineState:
    """Single-owner mutable state of an online acceleration loop."""

    window: IterateWindow
    y: np.ndarray
    lambda_rel: float = DEFAULT_LAMBDA
    eta: float = 1.0
    guard: object = None
    schedule: RegularizationSchedule | None = None
    x_prev: np.ndarray | None = None
    branch_log: list = field(default_factory=list)

    @classmethod
    def start(cls, x0, capacity=DEFAULT_WINDOW, lambda_rel=DEFAULT_LAMBDA,
              eta=1.0, guard=None, schedule=None):
        x0 = np.asarray(x0, dtype=float)
        return cls(window=IterateWindow(capacity), y=x0.copy(),
                   lambda_rel=lambda_rel, eta=eta, guard=guard,
                   schedule=schedule, x_prev=x0.copy())


def _current_lambda(state: OnlineState):
    if state.schedule is None:
        return state.lambda_rel
    proxy = state.schedule.distance_proxy
    if callable(proxy):
        d_est = float(proxy(state))
    else:
        r = residuals(state.window)
        d_est = float(np.linalg.norm(r[:, -1]))
    return schedule_lambda(state.schedule, max(d_est, 1e-300))


def online_rna_step(state: OnlineState, op: FixedPointOperator):
    """Advance one online step: x_N = g(y_{N-1}), y_N = extrapolation.

    A singular unregularized system triggers a single retry with the
    weight bumped tenfold before propagating. Returns (y_next,
    diagnostics); diagnostics carry the last coefficient, a rank
    estimate of the window and the achieved residual-combination norm.
    """
    x_new = op.apply(state.y)
    state.window.push(x_new, state.y)
    R = residuals(state.window)
    lam = _current_lambda(state)
    retried = False
    try:
        coeffs = rna_coefficients(R, lam, eta=state.eta)
    except SingularSystem:
        retried = True
        bumped = 10.0 * lam if lam > 0 else 10.0 * DEFAULT_LAMBDA
        coeffs = rna_coefficients(R, bumped, eta=state.eta)
        lam = bumped
    y_next = extrapolate_point(state.window, coeffs)
    svals = np.linalg.svd(R, compute_uv=False)
    rank = int(np.sum(svals > 1e-10 * svals[0])) if svals[0] > 0 else 0
    diagnostics = {
        "c": coeffs.c,
        "c_last": float(coeffs.c[-1]),
        "lambda": lam,
        "retried": retried,
        "rank_estimate": rank,
        "combo_residual_norm": float(np.linalg.norm(R @ coeffs.c)),
        "converged_window": coeffs.converged_window,
    }
    state.x_prev = x_new
    state.y = y_next
    return y_next, diagnostics


def run_online(op: FixedPointOperator, x0, iters, capacity=DEFAULT_WINDOW,
               lambda_rel=DEFAULT_LAMBDA, eta=1.0, grad_norm=None,
               tol=None):
    """Drive online acceleration for ``iters`` steps.

    Returns (state, history) where history records per-step diagnostics
    plus the gradient norm when a callable is supplied; stops early at
    ``tol`` on that norm.
    """
    state = OnlineState.start(x0, capacity=capacity, lambda_rel=lambda_rel,
                              eta=eta)
    history = []
    for i in range(iters):
        y, diag = online_rna_step(state, op)
        if grad_norm is not None:
            diag = dict(diag)
            diag["grad_norm"] = float(grad_norm(y))
            history.append(diag)
            if tol is not None and diag["grad_norm"] <= tol:
                break
        else:
            history.append(diag)
    return state, history


def last_coefficient_check(R, c=None, rank_rtol=1e-10):
    """Classify an unregularized window: full column rank forces a
    nonzero weight on the newest residual, otherwise the combination
    annihilates the residuals (the window has converged).
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[1]
    svals = np.linalg.svd(R, compute_uv=False)
    if svals[0] > 0:
        rank = int(np.sum(svals > rank_rtol * svals[0]))
    else:
        rank = 0
    full_rank = rank == n
    if c is None:
        c = rna_coefficients(R, 0.0).c
    c = np.asarray(c, dtype=float)
    if full_rank:
        if abs(c[-1]) <= 1e-12 * np.linalg.norm(c):
            raise AssertionError(
                "full-rank window produced a vanishing last coefficient")
        return LastCoefficientStatus.NONZERO_LAST
    combo = np.linalg.norm(R @ c)
    if combo > 1e-8 * max(svals[0], 1e-300):
        raise AssertionError(
            "rank-deficient window did not annihilate the residuals")
    return LastCoefficientStatus.RANK_DEFICIENT_CONVERGED


def guarded_momentum_step(state: OnlineState, base_row: CombinationRow,
                          condition, op: FixedPointOperator):
    """One guarded step for a momentum-type base algorithm.

    The new iterate x_k = g(y_{k-1}) is recorded, the extrapolation is
    formed, and the conditional point

        z_k = (x_extr - sum_{j<k} alpha_j x_j - sum_j beta_j y_{j-1}) / alpha_k

    is tested with ``condition(z, xs, ys) <= 0``. On success the
    extrapolated point is returned, otherwise the base combination.
    """
    x_new = op.apply(state.y)
    state.window.push(x_new, state.y)
    xs, ys = state.window.X, state.window.Y
    k = xs.shape[1]
    alpha = np.asarray(base_row.alpha, dtype=float)
    beta = np.asarray(base_row.beta, dtype=float)
    if len(alpha) != k:
        raise ValueError("base combination length must match the window")
    if alpha[-1] == 0.0:
        raise ZeroLeadingCoefficient("alpha_k must be nonzero")
    R = residuals(state.window)
    try:
        coeffs = rna_coefficients(R, _current_lambda(state), eta=state.eta)
    except SingularSystem:
        coeffs = rna_coefficients(R, 10.0 * DEFAULT_LAMBDA, eta=state.eta)
    x_extr = extrapolate_point(state.window, coeffs)
    base_point = xs @ alpha + ys @ beta
    z = (x_extr - (base_point - alpha[-1] * xs[:, -1])) / alpha[-1]
    take_extr = condition(z, xs, ys) <= 0.0
    y_next = x_extr if take_extr else base_point
    state.branch_log.append(bool(take_extr))
    state.x_prev = x_new
    state.y = y_next
    return y_next


def adaptive_nesterov_step(state: OnlineState, params: NesterovParams,
                           problem):
    """One step of the rate-preserving adaptive momentum method.

    Performs the gradient step, forms the extrapolation, computes the
    conditional point z = (x_extr + beta x_{i-1})/(1+beta) and accepts
    the extrapolated point when

        f(z) <= f(y_{i-1}) - ||grad f(y_{i-1})||^2 / (2 L)

    (the reference point is the iterate whose gradient was just
    computed, so the guard costs one extra function evaluation). On
    rejection the plain momentum combination is used. Returns (y_next,
    diagnostics).
    """
    beta = params.beta_momentum
    y_ref = state.y
    g_ref = problem.gradient(y_ref)
    x_new = y_ref - g_ref / params.L_smooth
    x_prev = state.x_prev if state.x_prev is not None else y_ref
    state.window.push(x_new, y_ref)
    R = residuals(state.window)
    try:
        coeffs = rna_coefficients(R, _current_lambda(state), eta=state.eta)
    except SingularSystem:
        coeffs = rna_coefficients(R, 10.0 * DEFAULT_LAMBDA, eta=state.eta)
    x_extr = extrapolate_point(state.window, coeffs)
    z = (x_extr + beta * x_prev) / (1.0 + beta)
    threshold = problem.value(y_ref) - float(g_ref @ g_ref) / (2.0 * params.L_smooth)
    accepted = problem.value(z) <= threshold
    if accepted:
        y_next = x_extr
    else:
        y_next = (1.0 + beta) * x_new - beta * x_prev
    state.branch_log.append(bool(accepted))
    diagnostics = {
        "accepted": bool(accepted),
        "reference": "previous_y",
        "conditional_point": z,
        "threshold": threshold,
    }
    state.x_prev = x_new
    state.y = y_next
    return y_next, diagnostics


def run_adaptive_nesterov(problem, x0, iters, params=None,
                          capacity=DEFAULT_WINDOW, lambda_rel=DEFAULT_LAMBDA,
                          tol=None):
    """Drive the adaptive method; returns (state, grad_norm_history)."""
    if params is None:
        params = NesterovParams.from_constants(problem.L, problem.mu)
    state = OnlineState.start(x0, capacity=capacity, lambda_rel=lambda_rel)
    history = []
    for _ in range(iters):
        y, _ = adaptive_nesterov_step(state, params, problem)
        history.append(float(np.linalg.norm(problem.gradient(y))))
        if tol is not None and history[-1] <= tol:
            break
    return state, history
