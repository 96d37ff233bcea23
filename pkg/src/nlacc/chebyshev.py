"""Chebyshev minimax values on segments, ellipses and sampled ranges.

These are the quantities that predict extrapolation rates: the classical
minimax value of degree-k polynomials normalized at 1 on a real segment
[0, 1-kappa], its closed-form extension to ellipses via the Joukowski
map, a numerically solved variant with a norm ball on the coefficient
vector, and the matrix-polynomial bound check with the proven absolute
constant 11.08.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .linalg import spectral_norm
from .numrange import EllipseRegion, NumericalRangeBoundary, segment_region

CROUZEIX_CONSTANT = 11.08
SUBGRADIENT_ITERS = 2000


class NormalizationInsideRegion(Exception):
    """The normalization point 1 lies inside the region; the minimax
    value would be >= 1 and the rate prediction is meaningless."""


def chebyshev_value(t, k):
    """T_k(t) for real t via the three-term recurrence."""
    if k == 0:
        return 1.0
    prev, cur = 1.0, float(t)
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * t * cur - prev
    return cur


def segment_minmax(kappa, k):
    """Minimax value of degree-k polynomials with p(1)=1 on [0, 1-kappa].

    Equals 1/|T_k(t0)| with t0 = (1+kappa)/(1-kappa), or equivalently
    2 rho^k / (1 + rho^{2k}) with rho = (1-sqrt(kappa))/(1+sqrt(kappa)).
    """
    if not 0.0 < kappa <= 1.0:
        raise ValueError("kappa must lie in (0, 1]")
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k == 0:
        return 1.0
    if kappa == 1.0:
        return 0.0
    t0 = (1.0 + kappa) / (1.0 - kappa)
    return 1.0 / abs(chebyshev_value(t0, k))


def complex_chebyshev(z, k):
    """T_k(z) for complex z through the Joukowski parametrization.

    Solves z = (v + 1/v)/2 on the branch |v| >= 1 and returns
    (v^k + v^{-k})/2; points on [-1, 1] fall on the |v| = 1 branch.
    """
    if k < 0:
        raise ValueError("degree must be nonnegative")
    z = complex(z)
    if k == 0:
        return 1.0 + 0.0j
    w = np.sqrt(z * z - 1.0 + 0.0j)
    v = z + w if abs(z + w) >= abs(z - w) else z - w
    if abs(v) < 1.0:
        v = 1.0 / v
    return (v**k + v ** (-k)) / 2.0


def fischer_applicable(region: EllipseRegion, k):
    """Sufficient conditions under which the scaled Chebyshev polynomial
    is the exact minimax solution on the ellipse (degree >= 5 regime)."""
    if k < 5:
        return False
    d = region.focal_d
    if d == 0.0:
        return False
    w1 = abs((1.0 - region.center) / (d * region.major_axis_dir))
    r = region.ratio_r
    a_r = region.semi_major_a / d
    cond1 = w1 >= 0.5 * (r ** np.sqrt(2.0) + r ** (-np.sqrt(2.0)))
    cond2 = w1 >= (2.0 * a_r**2 - 1.0 + np.sqrt(2.0 * a_r**4 - a_r**2 + 1.0)) / (2.0 * a_r)
    return bool(cond1 or cond2)


def ellipse_minmax(region: EllipseRegion, k):
    """Minimax value of the scaled Chebyshev polynomial on an ellipse.

    The maximum of |T_k((z-c)/d)| over the ellipse is attained at the
    major-axis endpoints, so the value is |T_k(a/d)| / |T_k((1-c)/d)|
    in foci-normalized coordinates. Degenerate cases: a segment
    reproduces ``segment_minmax`` and a circle gives (a/|1-c|)^k.
    """
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k == 0:
        return 1.0
    if region.contains(1.0):
        raise NormalizationInsideRegion(
            "normalization point 1 is inside the region")
    c = region.center
    a = region.semi_major_a
    d = region.focal_d
    if a == 0.0:
        return 0.0
    if d <= 1e-14 * a:
        return float((a / abs(1.0 - c)) ** k)
    u = region.major_axis_dir
    w1 = (1.0 - c) / (d * u)
    num = complex_chebyshev(a / d, k)
    den = complex_chebyshev(w1, k)
    return float(abs(num) / abs(den))


def _project_affine_ball(c, bound):
    # exact projection onto {sum(c) = 1} intersected with {||c|| <= bound}
    n = len(c)
    center = np.full(n, 1.0 / n)
    v = c - np.full(n, c.mean())  # component orthogonal to the ones vector
    proj = center + v
    if np.linalg.norm(proj) <= bound:
        return proj
    radius = np.sqrt(max(bound**2 - 1.0 / n, 0.0))
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return center
    return center + v * (radius / nv)


def _polish(V, c0, bound):
    # epigraph form min t s.t. |p(z_j)|^2 <= t, solved with SLSQP
    m, n = V.shape
    Vr, Vi = V.real, V.imag

    def split(w):
        return w[:n], w[n]

    def objective(w):
        return w[n]

    def objective_grad(w):
        g = np.zeros(n + 1)
        g[n] = 1.0
        return g

    def ineq(w):
        c, t = split(w)
        vals = (Vr @ c) ** 2 + (Vi @ c) ** 2
        return t - vals

    def ineq_jac(w):
        c, _ = split(w)
        jac = np.zeros((m, n + 1))
        jac[:, :n] = -2.0 * ((Vr @ c)[:, None] * Vr + (Vi @ c)[:, None] * Vi)
        jac[:, n] = 1.0
        return jac

    cons = [
        {"type": "ineq", "fun": ineq, "jac": ineq_jac},
        {"type": "eq", "fun": lambda w: np.array([w[:n].sum() - 1.0]),
         "jac": lambda w: np.concatenate([np.ones(n), [0.0]])[None, :]},
        {"type": "ineq",
         "fun": lambda w: np.array([bound**2 - w[:n] @ w[:n]]),
         "jac": lambda w: np.concatenate([-2.0 * w[:n], [0.0]])[None, :]},
    ]
    w0 = np.concatenate([c0, [np.max(np.abs(V @ c0)) ** 2]])
    res = minimize(objective, w0, jac=objective_grad, constraints=cons,
                   method="SLSQP", options={"maxiter": 400, "ftol": 1e-14})
    c = _project_affine_ball(res.x[:n], bound)
    return c


def constrained_minmax(boundary, k, tau):
    """Minimax value over a sampled range with a norm ball on the weights.

    Minimizes max_j |p(z_j)| over real-coefficient polynomials of degree
    k with p(1) = 1 and coefficient norm at most (1+tau)/sqrt(1+k).
    Solved by projected subgradient steps followed by a local polish of
    the epigraph formulation; accuracy is acceptance-grade (about 1e-3),
    not machine precision. Returns (value, coefficients).
    """
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if isinstance(boundary, NumericalRangeBoundary):
        pts = boundary.points
    else:
        pts = np.asarray(boundary, dtype=complex)
    n = k + 1
    bound = (1.0 + tau) / np.sqrt(n)
    V = np.vander(pts, n, increasing=True)

    def value(c):
        return float(np.max(np.abs(V @ c)))

    c = np.full(n, 1.0 / n)
    if tau == 0.0:
        # the affine slice touches the ball at a single point: plain averaging
        return value(c), c
    best_c, best_v = c.copy(), value(c)
    row_scale = float(np.max(np.abs(V)) ** 2 * n)
    step0 = max(best_v, 1e-12) / max(row_scale, 1e-12)
    for t in range(SUBGRADIENT_ITERS):
        pv = V @ c
        j = int(np.argmax(np.abs(pv)))
        mag = abs(pv[j])
        if mag == 0.0:
            break
        grad = (pv[j].conjugate() * V[j]).real / mag
        c = _project_affine_ball(c - step0 / np.sqrt(t + 1.0) * grad, bound)
        v = value(c)
        if v < best_v:
            best_v, best_c = v, c.copy()
    if not np.isinf(bound):
        polished = _polish(V, best_c, bound)
        pv = value(polished)
        if pv < best_v:
            best_v, best_c = pv, polished
    return best_v, best_c


def matrix_polynomial(G, coeffs):
    """Evaluate sum_i coeffs[i] G^i by Horner's scheme."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    out = np.eye(n) * coeffs[-1]
    for a in coeffs[-2::-1]:
        out = out @ G + a * np.eye(n)
    return out


def crouzeix_check(G, coeffs, boundary: NumericalRangeBoundary):
    """Compare ||p(G)|| against 11.08 times the sampled max of |p| on W(G).

    Returns (lhs, rhs, holds).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    lhs = spectral_norm(matrix_polynomial(G, coeffs))
    V = np.vander(boundary.points, len(coeffs), increasing=True)
    rhs = CROUZEIX_CONSTANT * float(np.max(np.abs(V @ coeffs)))
    return lhs, rhs, lhs <= rhs


def write_minimax_surface_csv(coeffs, path, re_range=(-1.2, 1.2),
                              im_range=(-1.2, 1.2), grid=101):
    """Dump |p(z)| on a complex grid as ``re,im,abs_p`` rows for plotting."""
    coeffs = np.asarray(coeffs)
    res = np.linspace(*re_range, grid)
    ims = np.linspace(*im_range, grid)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("re,im,abs_p\n")
        for re in res:
            zs = re + 1j * ims
            vals = np.abs(np.vander(zs, len(coeffs), increasing=True) @ coeffs)
            for im, v in zip(ims, vals):
                fh.write(f"{re:.17g},{im:.17g},{v:.17g}\n")


def segment_boundary(kappa, n_points=512):
    """Sampled boundary of the degenerate range [0, 1-kappa] of a
    symmetric contraction (convenience for rate predictions)."""
    hi = 1.0 - kappa
    pts = np.linspace(0.0, hi, n_points).astype(complex)
    region = segment_region(0.0, hi)
    return NumericalRangeBoundary(
        thetas=np.linspace(0.0, 2 * np.pi, n_points, endpoint=False),
        points=pts,
        hull=np.array([region.x_end, region.y_end]),
        max_real=hi)
