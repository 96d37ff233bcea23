"""Base iterations that produce the (X, Y) histories fed to extrapolation.

Contains the fixed-point operator abstraction, gradient and momentum
steppers with their combination-coefficient bookkeeping (the L matrices),
the primal-dual step with constant or adaptive parameters, a limited-
memory BFGS baseline, and the seedable additive-noise machinery used by
the perturbation analysis.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .extrapolate import IterateWindow
from .problems import (QuadraticProblem, TVDenoiseProblem, logistic_dual_prox,
                       tv_divergence, tv_dual_prox, tv_gradient)

ARMIJO_SLOPE = 1e-4
MAX_HALVINGS = 50


class InconsistentCoefficients(Exception):
    """A combination row does not sum to one."""


class ProxFailure(Exception):
    """An iterative proximal solve missed its tolerance."""


class LineSearchFailure(Exception):
    """Backtracking exceeded the halving budget."""


class NonFiniteIterate(Exception):
    """An iterate left the set of finite vectors."""


@dataclass(frozen=True)
class FixedPointOperator:
    """Iterative update g with optional linear form g(x) = G(x - x*) + x*."""

    apply: Callable[[np.ndarray], np.ndarray]
    dimension: int
    linear_form: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def matrix(self):
        if self.linear_form is None:
            raise ValueError("operator has no linear form")
        return self.linear_form[0]

    @property
    def fixed_point(self):
        if self.linear_form is None:
            raise ValueError("operator has no linear form")
        return self.linear_form[1]


def gradient_operator(problem, step):
    """Fixed-point operator of the gradient step x - step * grad f(x)."""
    if step <= 0:
        raise ValueError("step must be positive")
    grad = problem.gradient

    def apply(x):
        return x - step * grad(x)

    linear_form = None
    if isinstance(problem, QuadraticProblem):
        G = np.eye(problem.dimension) - step * problem.A
        linear_form = (G, problem.x_star.copy())
    return FixedPointOperator(apply=apply, dimension=problem.dimension,
                              linear_form=linear_form)


def linear_operator(G, x_star):
    """Operator for an explicit linear update g(x) = G(x - x*) + x*."""
    G = np.asarray(G, dtype=float)
    x_star = np.asarray(x_star, dtype=float)

    def apply(x):
        return G @ (x - x_star) + x_star

    return FixedPointOperator(apply=apply, dimension=len(x_star),
                              linear_form=(G, x_star))


# ---------------------------------------------------------------------------
# combination bookkeeping


@dataclass(frozen=True)
class CombinationRow:
    """Coefficients of one update y_i = sum_j alpha_j x_j + beta_j y_{j-1}."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have equal length")

    @property
    def total(self):
        return float(self.alpha.sum() + self.beta.sum())


def gd_row(i):
    """Combination row of a plain fixed-point update y_i = x_i."""
    alpha = np.zeros(i)
    alpha[-1] = 1.0
    return CombinationRow(alpha=alpha, beta=np.zeros(i))


def build_L(rows):
    """Assemble the upper-triangular coefficient matrix of the history.

    Column j expresses y_j over the basis [x_0, x_1, ..., x_k]; the
    matrix is built by the one-column-per-iteration recurrence and every
    column sums to one (checked to 1e-10).
    """
    L = np.array([[1.0]])
    for i, row in enumerate(rows, start=1):
        if len(row.alpha) != i:
            raise ValueError(f"row {i} must have length {i}")
        if abs(row.total - 1.0) > 1e-10:
            raise InconsistentCoefficients(
                f"row {i} sums to {row.total}, expected 1")
        top = np.zeros(i)
        top[1:] = row.alpha[:-1]
        top = top + L @ row.beta
        new = np.zeros((i + 1, i + 1))
        new[:i, :i] = L
        new[:i, i] = top
        new[i, i] = row.alpha[-1]
        L = new
    col_err = np.abs(L.sum(axis=0) - 1.0).max()
    if col_err > 1e-10:
        raise InconsistentCoefficients(f"column sums off by {col_err}")
    return L


def l_matrix_norm_products(rows):
    """Cumulative products prod_{j<=i} ||L_j||_2 used in perturbation bounds."""
    out = []
    prod = 1.0
    for i in range(1, len(rows) + 1):
        prod *= np.linalg.norm(build_L(rows[:i]), 2)
        out.append(prod)
    return np.array(out)


# ---------------------------------------------------------------------------
# momentum


@dataclass(frozen=True)
class NesterovParams:
    """Constant-momentum parameters for strongly convex problems."""

    L_smooth: float
    mu: float
    beta_momentum: float

    def __post_init__(self):
        if self.L_smooth <= 0 or self.mu <= 0 or self.mu > self.L_smooth:
            raise ValueError("need 0 < mu <= L")
        expected = self.expected_beta(self.L_smooth, self.mu)
        if abs(self.beta_momentum - expected) > 1e-10:
            raise ValueError(
                f"beta {self.beta_momentum} != (sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu))")

    @staticmethod
    def expected_beta(L, mu):
        return (math.sqrt(L) - math.sqrt(mu)) / (math.sqrt(L) + math.sqrt(mu))

    @classmethod
    def from_constants(cls, L, mu):
        return cls(L_smooth=L, mu=mu, beta_momentum=cls.expected_beta(L, mu))


def nesterov_step(state, params: NesterovParams, problem):
    """One momentum update from state (x_prev, y_prev).

    Returns (x_next, y_next, row) where the row records the combination
    y_i = (1+beta) x_i - beta x_{i-1} for the L-matrix bookkeeping (the
    very first step folds the x_0 term into y_0 since x_0 = y_0).
    """
    x_prev, y_prev, i = state
    beta = params.beta_momentum
    x_next = y_prev - problem.gradient(y_prev) / params.L_smooth
    y_next = x_next + beta * (x_next - x_prev)
    alpha = np.zeros(i)
    beta_vec = np.zeros(i)
    alpha[-1] = 1.0 + beta
    if i >= 2:
        alpha[-2] = -beta
    else:
        beta_vec[0] = -beta
    return x_next, y_next, CombinationRow(alpha=alpha, beta=beta_vec)


class GradientStepper:
    """Plain fixed-point recursion: y_i = x_i."""

    def combine(self, i, x_new, y_prev):
        return x_new, gd_row(i)


class NesterovStepper:
    """Momentum recursion with constant coefficient."""

    def __init__(self, params: NesterovParams):
        self.params = params
        self._x_prev = None

    def combine(self, i, x_new, y_prev):
        beta = self.params.beta_momentum
        x_prev = self._x_prev if self._x_prev is not None else y_prev
        y_new = x_new + beta * (x_new - x_prev)
        alpha = np.zeros(i)
        beta_vec = np.zeros(i)
        alpha[-1] = 1.0 + beta
        if i >= 2:
            alpha[-2] = -beta
        else:
            beta_vec[0] = -beta
        self._x_prev = x_new
        return y_new, CombinationRow(alpha=alpha, beta=beta_vec)


# ---------------------------------------------------------------------------
# runs and noise


@dataclass
class NoiseSpec:
    """Additive Gaussian noise with E||e||^2 = sigma^2, seedable."""

    sigma: float
    seed: int = 0


@dataclass
class PerturbationRecord:
    """Injected errors and the induced residual perturbation."""

    E: np.ndarray
    P: np.ndarray | None = None
    sigma_noise: float = 0.0
    alpha_exp: float = 0.0
    gamma_coeff: float = 0.0
    D: float = 0.0
    M_hess: float = 0.0


@dataclass
class RunResult:
    """History window plus per-iteration diagnostics of a driver run."""

    window: IterateWindow
    resid_norms: list
    f_values: list | None
    rows: list
    perturbation: PerturbationRecord | None = None
    wall_ms: list = field(default_factory=list)


def run_iterations(op: FixedPointOperator, x0, k, capacity=None,
                   stepper=None, noise: NoiseSpec | None = None,
                   problem=None):
    """Run x_i = g(y_{i-1}) (+ optional noise) for k iterations.

    The stepper supplies the linear combination producing y_i (plain
    recursion when omitted). Deterministic for a fixed noise seed.
    """
    if k < 1:
        raise ValueError("need at least one iteration")
    x0 = np.asarray(x0, dtype=float)
    window = IterateWindow(capacity)
    stepper = stepper or GradientStepper()
    rng = np.random.default_rng(noise.seed) if noise is not None else None
    errors = []
    resid_norms = []
    f_values = [] if problem is not None else None
    wall_ms = []
    rows = []
    y = x0.copy()
    d = len(x0)
    for i in range(1, k + 1):
        t0 = time.perf_counter()
        x = op.apply(y)
        if noise is not None:
            e = rng.standard_normal(d) * (noise.sigma / np.sqrt(d))
            x = x + e
            errors.append(e)
        if not np.all(np.isfinite(x)):
            raise NonFiniteIterate(f"iterate {i} is non-finite")
        window.push(x, y)
        resid_norms.append(float(np.linalg.norm(x - y)))
        if f_values is not None:
            f_values.append(float(problem.value(x)))
        y, row = stepper.combine(i, x, y)
        rows.append(row)
        wall_ms.append(1e3 * (time.perf_counter() - t0))
    record = None
    if noise is not None:
        E = np.column_stack(errors) if errors else np.zeros((d, 0))
        record = PerturbationRecord(E=E, sigma_noise=noise.sigma)
    return RunResult(window=window, resid_norms=resid_norms,
                     f_values=f_values, rows=rows, perturbation=record,
                     wall_ms=wall_ms)


def perturbation_matrix(clean: RunResult, noisy: RunResult):
    """P = (noisy residuals) - (clean residuals) on matched runs."""
    R = clean.window.X - clean.window.Y
    Rt = noisy.window.X - noisy.window.Y
    if R.shape != Rt.shape:
        raise ValueError("runs are not matched")
    return Rt - R


def perturbation_bound_check(record: PerturbationRecord, g_norm, l_bars):
    """Check ||P_i|| <= 2 ||E_i|| Lbar_i sum_{j<=i} ||G||^j for every prefix."""
    if record.P is None:
        raise ValueError("record has no perturbation matrix")
    E, P = record.E, record.P
    k = E.shape[1]
    if len(l_bars) < k:
        raise ValueError("need one L-product per iteration")
    powers = np.cumsum([g_norm**j for j in range(1, k + 1)])
    for i in range(1, k + 1):
        lhs = np.linalg.norm(P[:, :i], 2)
        rhs = 2.0 * np.linalg.norm(E[:, :i], 2) * l_bars[i - 1] * powers[i - 1]
        if lhs > rhs + 1e-12:
            return False
    return True


# ---------------------------------------------------------------------------
# primal-dual steps


@dataclass(frozen=True)
class CPParams:
    """Step lengths for the primal-dual iteration.

    Constant mode uses (sigma, tau_step, theta) as given. Adaptive mode
    recomputes th = (1 + 2*gamma*tau)^(-1/2) every step, scales
    sigma <- sigma/th and tau <- tau*th before the next call, and uses
    th as the momentum coefficient when ``adaptive_momentum`` is set
    (otherwise theta, typically 0, is kept).
    """

    sigma: float
    tau_step: float
    theta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    adaptive: bool = False
    adaptive_momentum: bool = False

    def __post_init__(self):
        if self.sigma <= 0 or self.tau_step <= 0:
            raise ValueError("sigma and tau must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")


def cp_constant_params(op_norm, gamma, delta, theta=None):
    """Optimal constant parameters when both conjugates are strongly convex:
    sigma = sqrt(gamma/delta)/|A|, tau = sqrt(delta/gamma)/|A| and
    theta = 1/(1 + 2 sqrt(gamma delta)/|A|)."""
    sigma = math.sqrt(gamma / delta) / op_norm
    tau = math.sqrt(delta / gamma) / op_norm
    if theta is None:
        theta = 1.0 / (1.0 + 2.0 * math.sqrt(gamma * delta) / op_norm)
    return CPParams(sigma=sigma, tau_step=tau, theta=theta, gamma=gamma,
                    delta=delta)


@dataclass(frozen=True)
class CPState:
    """Primal-dual state (dual y, primal x, extrapolated primal x_bar)."""

    y: np.ndarray
    x: np.ndarray
    x_bar: np.ndarray

    @classmethod
    def cold_start(cls, y0, x0):
        return cls(y=np.array(y0, dtype=float), x=np.array(x0, dtype=float),
                   x_bar=np.array(x0, dtype=float))

    def stacked(self):
        return np.concatenate([np.ravel(self.y), np.ravel(self.x)])


def chambolle_pock_step(state: CPState, params: CPParams, problem):
    """One primal-dual update; returns (next_state, next_params).

    The problem must expose K, Kt, prox_fstar(v, sigma) and
    prox_g(v, tau). Adaptive parameters are advanced per the standard
    rule before the next call.
    """
    y_next = problem.prox_fstar(state.y + params.sigma * problem.K(state.x_bar),
                                params.sigma)
    x_next = problem.prox_g(state.x - params.tau_step * problem.Kt(y_next),
                            params.tau_step)
    if params.adaptive:
        th = 1.0 / math.sqrt(1.0 + 2.0 * params.gamma * params.tau_step)
        momentum = th if params.adaptive_momentum else params.theta
        next_params = replace(params, sigma=params.sigma / th,
                              tau_step=params.tau_step * th)
    else:
        momentum = params.theta
        next_params = params
    x_bar = x_next + momentum * (x_next - state.x)
    return CPState(y=y_next, x=x_next, x_bar=x_bar), next_params


def moreau_conjugate_prox(prox_f, tau_step, y):
    """Prox of the conjugate at y/tau with parameter 1/tau, via the
    identity prox_f^tau(y) + tau * prox_{f*}^{1/tau}(y/tau) = y."""
    if tau_step <= 0:
        raise ValueError("tau must be positive")
    y = np.asarray(y, dtype=float)
    return (y - prox_f(y, tau_step)) / tau_step


@dataclass(frozen=True)
class RidgeSaddleProblem:
    """Saddle form of 0.5||Ax - b||^2 + mu/2 ||x||^2 with closed proxes."""

    A: np.ndarray
    b: np.ndarray
    mu: float
    delta: float = 1.0  # dual strong convexity of the quadratic conjugate

    def K(self, x):
        return self.A @ x

    def Kt(self, y):
        return self.A.T @ y

    def prox_fstar(self, v, sigma):
        return (v - sigma * self.b) / (1.0 + sigma)

    def prox_g(self, v, tau):
        return v / (1.0 + tau * self.mu)

    def primal_value(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r) + 0.5 * self.mu * float(x @ x)

    def saddle_fixed_point(self):
        """(y*, x*) with y* = A x* - b and x* = -A^T y* / mu."""
        d = self.A.shape[1]
        M = self.A.T @ self.A + self.mu * np.eye(d)
        x = np.linalg.solve(M, self.A.T @ self.b)
        return self.A @ x - self.b, x


@dataclass(frozen=True)
class LogisticSaddleProblem:
    """Saddle form of the logistic loss; the dual prox is iterative."""

    A: np.ndarray
    labels: np.ndarray
    mu: float
    delta: float = 4.0
    prox_tol: float = 1e-10
    strict: bool = False

    def K(self, x):
        return self.A @ x

    def Kt(self, y):
        return self.A.T @ y

    def prox_fstar(self, v, sigma):
        out, failures = logistic_dual_prox(v, sigma, self.labels, tol=self.prox_tol)
        if failures and self.strict:
            raise ProxFailure(f"{failures} coordinates missed tolerance")
        return out

    def prox_g(self, v, tau):
        return v / (1.0 + tau * self.mu)

    def primal_value(self, x):
        margins = self.labels * (self.A @ x)
        return float(np.logaddexp(0.0, -margins).sum()
                     + 0.5 * self.mu * float(x @ x))


@dataclass(frozen=True)
class TVSaddleProblem:
    """Saddle form of TV denoising; dual is a field, primal an image."""

    problem: TVDenoiseProblem

    def K(self, x):
        return tv_gradient(x)

    def Kt(self, y):
        return -tv_divergence(y)

    def prox_fstar(self, v, sigma):
        return tv_dual_prox(v)

    def prox_g(self, v, tau):
        mu = self.problem.mu
        return (v + tau * mu * self.problem.noisy) / (1.0 + tau * mu)

    def primal_value(self, x):
        return self.problem.primal_value(x)


# ---------------------------------------------------------------------------
# L-BFGS baseline


@dataclass
class LBFGSState:
    x: np.ndarray
    grad: np.ndarray
    s_list: list = field(default_factory=list)
    y_list: list = field(default_factory=list)
    converged: bool = False


def _two_loop_direction(grad, s_list, y_list):
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_list, y_list)]
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def lbfgs_baseline_step(state: LBFGSState, problem, memory=10):
    """One limited-memory quasi-Newton step with Armijo backtracking.

    Acceptance rule: f(x + t d) <= f(x) - 1e-4 * t * ||grad||^2 with
    halving, at most 50 halvings. A zero-gradient state is returned
    unchanged with the converged flag set.
    """
    if np.linalg.norm(state.grad) == 0.0:
        return LBFGSState(x=state.x, grad=state.grad, s_list=state.s_list,
                          y_list=state.y_list, converged=True)
    d = _two_loop_direction(state.grad, state.s_list, state.y_list)
    f0 = problem.value(state.x)
    gnorm2 = float(state.grad @ state.grad)
    t = 1.0
    for _ in range(MAX_HALVINGS + 1):
        x_new = state.x + t * d
        if problem.value(x_new) <= f0 - ARMIJO_SLOPE * t * gnorm2:
            break
        t *= 0.5
    else:
        raise LineSearchFailure("no acceptable step after 50 halvings")
    grad_new = problem.gradient(x_new)
    s = x_new - state.x
    yv = grad_new - state.grad
    s_list, y_list = list(state.s_list), list(state.y_list)
    if float(s @ yv) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
        s_list.append(s)
        y_list.append(yv)
        if len(s_list) > memory:
            s_list.pop(0)
            y_list.pop(0)
    return LBFGSState(x=x_new, grad=grad_new, s_list=s_list, y_list=y_list)


def run_lbfgs(problem, x0, iters, tol=1e-10, memory=10):
    """Minimize with the baseline; returns (state, grad_norm_history)."""
    x0 = np.asarray(x0, dtype=float)
    state = LBFGSState(x=x0.copy(), grad=problem.gradient(x0))
    history = [float(np.linalg.norm(state.grad))]
    for _ in range(iters):
        if history[-1] <= tol:
            state.converged = True
            break
        state = lbfgs_baseline_step(state, problem, memory=memory)
        history.append(float(np.linalg.norm(state.grad)))
    return state, history
