"""Numerical range (field of values) computation and operator assembly.

The boundary of W(G) is sampled by maximizing Re(e^{i*theta} z) over the
range for a grid of angles: for each angle the top eigenvector of the
Hermitian part of the rotated operator gives a boundary point. Complex
Hermitian eigenproblems are reduced to real symmetric ones of doubled
size. Operators for momentum and primal-dual iterations on quadratics
are assembled here as well, together with the feasibility predicate
(max real part of the range below one) that decides whether
extrapolation with the p(1)=1 normalization can help.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import linalg

DEFAULT_ANGLES = 256
MAX_ANGLES = 4096
FEASIBILITY_MARGIN = 1e-9


class SpectrumOutOfRange(Exception):
    """Operator spectrum violates the [0, 1) requirement."""


class OperatorKind(Enum):
    NESTEROV_FULL = "nesterov_full"
    NESTEROV_EIGEN_BLOCK = "nesterov_eigen_block"
    CHAMBOLLE_POCK_QUADRATIC = "chambolle_pock_quadratic"
    GENERIC = "generic"


@dataclass(frozen=True)
class BlockOperator:
    """A (possibly block-structured) linear iteration operator."""

    matrix: np.ndarray
    kind: OperatorKind = OperatorKind.GENERIC
    blocks: tuple = ()
    beta: float = 0.0
    spectrum: np.ndarray | None = None


@dataclass(frozen=True)
class NumericalRangeBoundary:
    """Sampled boundary of a numerical range with its convex hull."""

    thetas: np.ndarray
    points: np.ndarray            # complex boundary samples p_theta
    hull: np.ndarray              # complex hull vertices, counter-clockwise
    max_real: float

    def csv_rows(self):
        """Rows (theta, re, im) for plotting exports."""
        return [(float(t), float(p.real), float(p.imag))
                for t, p in zip(self.thetas, self.points)]


def _convex_hull(points):
    """Monotone-chain hull of complex points; degenerate hulls collapse
    to a segment (two vertices) or a single point."""
    pts = np.unique(np.round(points, 14))
    if len(pts) == 1:
        return pts
    order = np.lexsort((pts.imag, pts.real))
    pts = pts[order]

    def cross(o, a, b):
        return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)

    span = max(np.ptp(pts.real), np.ptp(pts.imag), 1e-300)
    eps = 1e-13 * span * span

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= eps:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) == 0:
        hull = np.array([pts[0], pts[-1]])
    return hull


def _hull_area(hull):
    if len(hull) < 3:
        return 0.0
    x, y = hull.real, hull.imag
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _boundary_point(S, K, theta, dim):
    # Hermitian part of e^{i theta} G is cos(theta) S + i sin(theta) K;
    # its top eigenvector comes from the doubled real symmetric system.
    A = np.cos(theta) * S
    B = np.sin(theta) * K
    doubled = np.block([[A, -B], [B, A]])
    _, _, vec = linalg.sym_eig_extreme(doubled)
    v = vec[:dim] + 1j * vec[dim:]
    return complex(np.vdot(v, (S + K) @ v))


def boundary_points(G, n_angles=None):
    """Sample the boundary of W(G) for a real square matrix G.

    With ``n_angles=None`` the angle grid starts at DEFAULT_ANGLES and is
    doubled until the hull area stabilizes below 1e-8.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("G must be square")
    adaptive = n_angles is None
    n = DEFAULT_ANGLES if adaptive else int(n_angles)
    if n < 8:
        raise ValueError("need at least 8 angles")
    dim = G.shape[0]
    S = (G + G.T) / 2.0
    K = (G - G.T) / 2.0

    def sample(count):
        thetas = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        pts = np.array([_boundary_point(S, K, t, dim) for t in thetas])
        return thetas, pts

    thetas, pts = sample(n)
    if adaptive:
        area = _hull_area(_convex_hull(pts))
        while n < MAX_ANGLES:
            n *= 2
            thetas, pts = sample(n)
            new_area = _hull_area(_convex_hull(pts))
            if abs(new_area - area) < 1e-8:
                break
            area = new_area
    hull = _convex_hull(pts)
    return NumericalRangeBoundary(
        thetas=thetas, points=pts, hull=hull, max_real=float(pts.real.max()))


def max_real_part(G):
    """Largest real part of W(G): the top eigenvalue of (G + G^T)/2."""
    G = np.asarray(G, dtype=float)
    return linalg.sym_eig_extreme((G + G.T) / 2.0)[1]


def point_to_hull_distance(hull, z):
    """Distance from a complex point to the convex hull region (0 inside)."""
    z = complex(z)
    if len(hull) == 1:
        return abs(z - hull[0])
    verts = np.concatenate([hull, hull[:1]])
    inside = len(hull) >= 3
    dmin = np.inf
    for a, b in zip(verts[:-1], verts[1:]):
        ab = b - a
        denom = abs(ab) ** 2
        t = 0.0 if denom == 0 else np.clip(((z - a).real * ab.real + (z - a).imag * ab.imag) / denom, 0.0, 1.0)
        dmin = min(dmin, abs(z - (a + t * ab)))
        if inside:
            cross = ab.real * (z - a).imag - ab.imag * (z - a).real
            if cross < 0:
                inside = False
    return 0.0 if inside else float(dmin)


@dataclass(frozen=True)
class EllipseRegion:
    """Elliptical region given by its axis endpoints.

    The first axis joins ``x_end`` to ``y_end`` and the second joins
    ``w_end`` to ``z_end``; derived quantities (center, focal distance,
    semi-axes and the Joukowski radius ``ratio_r`` of the foci-normalized
    ellipse) are computed from the endpoints.
    """

    x_end: complex
    y_end: complex
    w_end: complex
    z_end: complex

    @property
    def center(self):
        return (self.x_end + self.y_end) / 2.0

    @property
    def _semi_axes(self):
        s1 = abs(self.y_end - self.x_end) / 2.0
        s2 = abs(self.z_end - self.w_end) / 2.0
        return s1, s2

    @property
    def semi_major_a(self):
        return max(self._semi_axes)

    @property
    def semi_minor_b(self):
        return min(self._semi_axes)

    @property
    def focal_d(self):
        a, b = self.semi_major_a, self.semi_minor_b
        return float(np.sqrt(max(a * a - b * b, 0.0)))

    @property
    def major_axis_dir(self):
        s1, s2 = self._semi_axes
        if s1 >= s2:
            u = self.y_end - self.x_end
        else:
            u = self.z_end - self.w_end
        if abs(u) == 0:
            return 1.0 + 0.0j
        return u / abs(u)

    @property
    def ratio_r(self):
        d = self.focal_d
        if d == 0.0:
            return np.inf
        a_r = self.semi_major_a / d
        return float(a_r + np.sqrt(max(a_r * a_r - 1.0, 0.0)))

    @property
    def foci(self):
        c, d, u = self.center, self.focal_d, self.major_axis_dir
        return c - d * u, c + d * u

    def contains(self, z, tol=1e-12):
        f1, f2 = self.foci
        return abs(z - f1) + abs(z - f2) <= 2.0 * self.semi_major_a + tol

    def boundary_samples(self, n=512):
        a, b = self.semi_major_a, self.semi_minor_b
        u = self.major_axis_dir
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return self.center + u * (a * np.cos(t) + 1j * b * np.sin(t))


def ellipse_region(center, semi_major, semi_minor, vertical=False):
    """Axis-aligned ellipse from center and semi-axis lengths."""
    center = complex(center)
    if semi_minor > semi_major:
        raise ValueError("semi_minor must not exceed semi_major")
    if vertical:
        return EllipseRegion(center - 1j * semi_major, center + 1j * semi_major,
                             center - semi_minor, center + semi_minor)
    return EllipseRegion(center - semi_major, center + semi_major,
                         center - 1j * semi_minor, center + 1j * semi_minor)


def segment_region(lo, hi):
    """Degenerate ellipse covering the real segment [lo, hi]."""
    mid = (lo + hi) / 2.0
    return EllipseRegion(complex(lo), complex(hi), complex(mid), complex(mid))


def ellipse_2x2(a, b, c, d):
    """Numerical-range ellipse of the real 2x2 matrix [[a, b], [c, d]].

    The axis endpoints are the classical closed forms: the real segment
    and the vertical segment through the midpoint of the trace.
    """
    root = np.sqrt((a - d) ** 2 + (b + c) ** 2)
    x = 0.5 * (a + d - root)
    y = 0.5 * (a + d + root)
    mid = (a + d) / 2.0
    half_im = abs(b - c) / 2.0
    return EllipseRegion(complex(x), complex(y),
                         mid - 1j * half_im, mid + 1j * half_im)


def nesterov_momentum(ratio):
    """Momentum coefficient (sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)) for L/mu."""
    if ratio < 1:
        raise ValueError("L/mu ratio must be at least 1")
    s = np.sqrt(ratio)
    return (s - 1.0) / (s + 1.0)


def nesterov_operator(spectrum_or_matrix, beta):
    """Block operator [[0, A], [-beta I, (1+beta) A]] of momentum iterations.

    Accepts either the symmetric matrix A = I - B^T B / L or its spectrum.
    The full 2d x 2d matrix and the per-eigenvalue 2x2 blocks are both
    assembled. Raises SpectrumOutOfRange when an eigenvalue leaves [0, 1).
    """
    arr = np.asarray(spectrum_or_matrix, dtype=float)
    if arr.ndim == 2:
        A = arr
        spectrum = np.linalg.eigvalsh((A + A.T) / 2.0)
    elif arr.ndim == 1:
        spectrum = np.sort(arr)
        A = np.diag(spectrum)
    else:
        raise ValueError("expected a matrix or a 1-d spectrum")
    if spectrum.min() < -1e-12 or spectrum.max() >= 1.0:
        raise SpectrumOutOfRange(
            f"spectrum range [{spectrum.min():.3g}, {spectrum.max():.3g}] not in [0, 1)")
    d = A.shape[0]
    eye = np.eye(d)
    matrix = np.block([[np.zeros((d, d)), A], [-beta * eye, (1.0 + beta) * A]])
    blocks = tuple(
        np.array([[0.0, lam], [-beta, (1.0 + beta) * lam]]) for lam in spectrum)
    return BlockOperator(matrix=matrix, kind=OperatorKind.NESTEROV_FULL,
                         blocks=blocks, beta=float(beta), spectrum=spectrum)


def nesterov_max_real(ratio):
    """Closed-form max real part of the momentum operator range for L/mu.

    Evaluates 0.5*((1+b)*l + sqrt(l^2 (1+b)^2 + (l-b)^2)) at the largest
    block l = 1 - mu/L with b the momentum coefficient.
    """
    if ratio < 1:
        raise ValueError("L/mu ratio must be at least 1")
    lam = 1.0 - 1.0 / ratio
    beta = nesterov_momentum(ratio)
    s = (1.0 + beta) * lam
    return 0.5 * (s + np.sqrt(s * s + (lam - beta) ** 2))


def cp_operator(A, sigma, tau_step, mu):
    """Primal-dual iteration operator on a ridge quadratic.

    G = [[I/(1+s), s A/(1+s)],
         [t A^T/((1+s)(1+t mu)), I/(1+t mu) - t s A^T A/((1+s)(1+t mu))]]

    which is symmetric exactly when sigma = tau/(1 + tau*mu).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be 2-d")
    if sigma <= 0 or tau_step <= 0 or mu < 0:
        raise ValueError("need sigma, tau > 0 and mu >= 0")
    n, d = A.shape
    s1 = 1.0 + sigma
    s2 = 1.0 + tau_step * mu
    top = np.hstack([np.eye(n) / s1, sigma * A / s1])
    bottom = np.hstack([
        tau_step * A.T / (s1 * s2),
        np.eye(d) / s2 - tau_step * sigma * (A.T @ A) / (s1 * s2),
    ])
    matrix = np.vstack([top, bottom])
    return BlockOperator(matrix=matrix, kind=OperatorKind.CHAMBOLLE_POCK_QUADRATIC)


def _operator_matrix(op):
    return op.matrix if isinstance(op, BlockOperator) else np.asarray(op, dtype=float)


def power_range(op, p, n_angles=None):
    """Numerical range boundary of the p-th power of the operator."""
    if p < 1:
        raise ValueError("power must be at least 1")
    G = np.linalg.matrix_power(_operator_matrix(op), p)
    return boundary_points(G, n_angles)


def acceleration_feasible(boundary: NumericalRangeBoundary) -> bool:
    """Whether the normalization point 1 lies strictly right of the range."""
    return boundary.max_real < 1.0 - FEASIBILITY_MARGIN


def write_boundary_csv(boundary: NumericalRangeBoundary, path):
    """Dump boundary samples as ``theta,re,im`` rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("theta,re,im\n")
        for theta, re, im in boundary.csv_rows():
            fh.write(f"{theta:.17g},{re:.17g},{im:.17g}\n")
