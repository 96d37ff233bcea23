"""Small dense linear-algebra kernels shared by the rest of the toolkit.

Everything here operates on plain numpy arrays: matrices are 2-d float
arrays in row-major order, vectors are 1-d arrays. Only symmetric
eigenproblems are needed (complex Hermitian ones are reduced elsewhere to
real symmetric problems of doubled size).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SYMMETRY_RTOL = 1e-12


class NotPositiveDefinite(Exception):
    """The shifted system is not positive definite (nonpositive pivot)."""


class ConvergenceFailure(Exception):
    """An iterative eigenvalue computation exhausted its budget."""


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _require_symmetric(M, rtol=SYMMETRY_RTOL):
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")


def sym_solve_shifted(M, shift, rhs):
    """Solve (M + shift*I) v = rhs for symmetric positive definite M + shift*I.

    Uses a Cholesky factorization; raises NotPositiveDefinite when a
    nonpositive pivot is met. The relative residual of the returned
    solution is below 1e-10 for well-posed systems.
    """
    M = _as_matrix(M)
    _require_symmetric(M)
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    rhs = np.asarray(rhs, dtype=float)
    A = M + shift * np.eye(M.shape[0])
    try:
        factor = cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    v = cho_solve(factor, rhs, check_finite=False)
    # one step of iterative refinement keeps the residual at solver noise
    resid = rhs - A @ v
    v = v + cho_solve(factor, resid, check_finite=False)
    return v


def sym_eig_extreme(M):
    """Extreme eigenvalues of a symmetric matrix.

    Returns (min_eigenvalue, max_eigenvalue, max_eigenvector) with the
    eigenvector normalized to unit length.
    """
    M = _as_matrix(M)
    _require_symmetric(M)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    vec = V[:, -1]
    return float(w[0]), float(w[-1]), vec / np.linalg.norm(vec)


def spectral_norm(M, rtol=1e-12, max_iter=10_000):
    """Largest singular value of M via power iteration on M^T M.

    The zero matrix returns 0. Accuracy is better than 1e-8 relative for
    any matrix with a finite iteration budget because the Rayleigh
    quotient converges even with clustered top singular values.
    """
    M = _as_matrix(M)
    if M.size == 0:
        raise ValueError("matrix must be nonempty")
    scale = np.abs(M).max()
    if scale == 0.0:
        return 0.0
    # iterate on the smaller Gram matrix
    B = M / scale
    G = B.T @ B if B.shape[1] <= B.shape[0] else B @ B.T
    n = G.shape[0]
    rng = np.random.default_rng(0x5eed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    block = 4  # matvecs between convergence checks
    for _ in range(max_iter // block):
        for _ in range(block):
            w = G @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:  # v landed in the null space; restart
                w = rng.standard_normal(n)
                nw = np.linalg.norm(w)
            v = w / nw
        rho_next = float(v @ (G @ v))
        if abs(rho_next - rho) <= rtol * max(rho_next, 1e-300):
            rho = rho_next
            break
        rho = rho_next
    return float(scale * np.sqrt(max(rho, 0.0)))
