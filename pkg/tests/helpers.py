"""Shared independent oracles for the test suite.

Everything here is deliberately written against the mathematical
definitions (brute force, grid search, determinant bisection) rather
than reusing library code paths, so tests compare two distinct routes.
"""

import numpy as np

from nlacc.numrange import point_to_hull_distance


def affine_lstsq_min(R):
    """Brute-force min of ||R c|| over sum(c) = 1 by direct least squares
    on the residual basis (null-space substitution + numpy lstsq)."""
    n = R.shape[1]
    c0 = np.full(n, 1.0 / n)
    if n == 1:
        return c0, float(np.linalg.norm(R @ c0))
    q, _ = np.linalg.qr(np.ones((n, 1)), mode="complete")
    Z = q[:, 1:]
    u, *_ = np.linalg.lstsq(R @ Z, -R @ c0, rcond=None)
    c = c0 + Z @ u
    return c, float(np.linalg.norm(R @ c))


def grid_search_cna(R, tau, span=2.5, coarse=161, refine_rounds=4):
    """Dense grid search for min ||R c||, sum c = 1, ||c|| <= (1+tau)/sqrt(3).

    Only for three-column residual matrices. Returns (c, value).
    """
    assert R.shape[1] == 3
    bound = (1.0 + tau) / np.sqrt(3.0)

    def scan(lo1, hi1, lo2, hi2, num):
        g1 = np.linspace(lo1, hi1, num)
        g2 = np.linspace(lo2, hi2, num)
        c1g, c2g = np.meshgrid(g1, g2, indexing="ij")
        c3g = 1.0 - c1g - c2g
        cs = np.stack([c1g, c2g, c3g], axis=-1).reshape(-1, 3)
        feas = np.linalg.norm(cs, axis=1) <= bound
        cs = cs[feas]
        vals = np.linalg.norm(cs @ R.T, axis=1)
        j = int(np.argmin(vals))
        return cs[j], float(vals[j])

    best_c, best_v = scan(-span, span, -span, span, coarse)
    width = 2.0 * span / (coarse - 1)
    for _ in range(refine_rounds):
        c1, c2 = best_c[0], best_c[1]
        best_c, best_v = scan(c1 - width, c1 + width, c2 - width, c2 + width, 81)
        width = 2.0 * width / 80
    return best_c, best_v


def det_extreme_eigs(M, scan_points=4000, bisections=90):
    """Extreme eigenvalues of a symmetric matrix by determinant sign
    bisections inside the Gershgorin interval (characteristic-polynomial
    root bracketing; independent of any eigensolver)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    radii = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    lo = float((np.diag(M) - radii).min()) - 1e-9
    hi = float((np.diag(M) + radii).max()) + 1e-9

    def char(t):
        return float(np.linalg.det(M - t * np.eye(n)))

    grid = np.linspace(lo, hi, scan_points)
    vals = np.array([char(t) for t in grid])
    signs = np.sign(vals)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    assert len(flips) >= 1, "no sign change found"

    def bisect(a, b):
        fa = char(a)
        for _ in range(bisections):
            m = 0.5 * (a + b)
            fm = char(m)
            if fa * fm <= 0:
                b = m
            else:
                a, fa = m, fm
        return 0.5 * (a + b)

    lam_min = bisect(grid[flips[0]], grid[flips[0] + 1])
    lam_max = bisect(grid[flips[-1]], grid[flips[-1] + 1])
    return lam_min, lam_max


def ternary_min(fun, lo, hi, iters=200):
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fun(m1) <= fun(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def grid_minimax_segment(kappa, k, span=6.0):
    """Minimax value of degree-k polynomials with p(1)=1 on [0, 1-kappa],
    by nested ternary search on the convex coefficient objective (k <= 2).
    The inner max over the segment is exact for affine and quadratic p."""
    hi = 1.0 - kappa

    def seg_max(coeffs):
        # max of |c0 + c1 z + c2 z^2| over [0, hi]: endpoints plus vertex
        c = np.zeros(3)
        c[: len(coeffs)] = coeffs
        cands = [0.0, hi]
        if c[2] != 0.0:
            vertex = -c[1] / (2.0 * c[2])
            if 0.0 < vertex < hi:
                cands.append(vertex)
        return max(abs(c[0] + c[1] * z + c[2] * z * z) for z in cands)

    if k == 1:
        def obj(c1):
            return seg_max([1.0 - c1, c1])

        c1 = ternary_min(obj, -span, span)
        return obj(c1)
    if k == 2:
        def inner(c2):
            def obj(c1):
                return seg_max([1.0 - c1 - c2, c1, c2])

            c1 = ternary_min(obj, -span, span)
            return obj(c1)

        c2 = ternary_min(inner, -span, span)
        return inner(c2)
    raise ValueError("oracle implemented for degrees 1 and 2")


def region_hausdorff(hull_a, hull_b):
    """Hausdorff distance between two convex regions given by hull
    vertices (complex numbers)."""
    da = max(point_to_hull_distance(hull_b, z) for z in hull_a)
    db = max(point_to_hull_distance(hull_a, z) for z in hull_b)
    return max(da, db)


def fd_gradient(fun, x, step=1e-5):
    """Central finite-difference gradient."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return g
