"""Test problems with analytic oracles.

Three families: quadratics with a controlled spectrum, l2-regularized
logistic regression (with a sparse-text reader for external data), and
total-variation image denoising with its forward-difference operators
and proximal maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import spectral_norm

TV_GRAD_NORM_SQ = 8.0  # operator norm squared of the forward-difference gradient


class ParseError(Exception):
    """Malformed dataset line; carries the 1-based line number."""

    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDataset(Exception):
    """The dataset file contains no samples."""


# ---------------------------------------------------------------------------
# quadratics


@dataclass(frozen=True)
class QuadraticProblem:
    """f(x) = 0.5 (x - x*)^T A (x - x*) with mu I <= A <= L I."""

    A: np.ndarray
    x_star: np.ndarray
    mu: float
    L: float

    @property
    def b(self):
        return self.A @ self.x_star

    @property
    def kappa(self):
        return self.mu / self.L

    @property
    def dimension(self):
        return len(self.x_star)

    def value(self, x):
        dx = x - self.x_star
        return 0.5 * float(dx @ (self.A @ dx))

    def gradient(self, x):
        return self.A @ (x - self.x_star)


def synthetic_quadratic(d, condition, seed=0, L=1.0):
    """Random quadratic with log-uniform spectrum in [L/condition, L].

    Both endpoints of the spectrum are attained and the minimizer is a
    random unit vector, so kappa = 1/condition exactly.
    """
    if condition < 1:
        raise ValueError("condition must be at least 1")
    rng = np.random.default_rng(seed)
    lo = L / condition
    if d == 1:
        eigs = np.array([L])
    elif condition == 1:
        eigs = np.full(d, L)
    else:
        eigs = np.exp(rng.uniform(np.log(lo), np.log(L), size=d))
        eigs[0], eigs[-1] = lo, L
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = Q @ np.diag(eigs) @ Q.T
    A = (A + A.T) / 2.0
    x_star = rng.standard_normal(d)
    x_star /= np.linalg.norm(x_star)
    return QuadraticProblem(A=A, x_star=x_star, mu=float(lo), L=float(L))


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-np.clip(t, -500, 500)))


@dataclass(frozen=True)
class LogisticProblem:
    """l2-regularized logistic loss sum_i log(1 + exp(-y_i a_i^T x)) + mu/2 |x|^2."""

    data: np.ndarray       # n x d, one sample per row
    labels: np.ndarray     # entries in {-1, +1}
    mu: float = 0.0

    def __post_init__(self):
        if set(np.unique(self.labels)) - {-1.0, 1.0}:
            raise ValueError("labels must be +1 or -1")

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def dimension(self):
        return self.data.shape[1]

    @property
    def L(self):
        return spectral_norm(self.data) ** 2 / 4.0 + self.mu

    def value(self, x):
        margins = self.labels * (self.data @ x)
        return float(np.logaddexp(0.0, -margins).sum()
                     + 0.5 * self.mu * (x @ x))

    def gradient(self, x):
        margins = self.labels * (self.data @ x)
        weights = self.labels * _sigmoid(-margins)
        return -self.data.T @ weights + self.mu * x

    def hessian(self, x):
        margins = self.labels * (self.data @ x)
        s = _sigmoid(margins)
        w = s * (1.0 - s)
        return self.data.T @ (w[:, None] * self.data) + self.mu * np.eye(self.dimension)


def logistic_oracles(problem: LogisticProblem):
    """(value, gradient) callables for a logistic problem."""
    return problem.value, problem.gradient


def synthetic_logistic(d, n, condition, seed=0):
    """Random logistic instance with mu set so that L/mu == condition."""
    if condition <= 1:
        raise ValueError("condition must exceed 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    labels = np.sign(A @ w + 0.1 * rng.standard_normal(n))
    labels[labels == 0] = 1.0
    smooth = spectral_norm(A) ** 2 / 4.0
    mu = smooth / (condition - 1.0)
    return LogisticProblem(data=A, labels=labels, mu=float(mu))


def load_dataset(path, mu=0.0, row_normalize=True, rescale_global=False):
    """Read a sparse classification text file into a LogisticProblem.

    One sample per line: ``label idx:val idx:val ...`` with 1-based
    feature indices. Rows are normalized to unit norm by default;
    ``rescale_global=True`` additionally scales the matrix so that
    ||A^T A|| = 1.
    """
    rows = []
    labels = []
    max_idx = 0
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            label_tok = tokens[0]
            if label_tok in ("+1", "1"):
                labels.append(1.0)
            elif label_tok == "-1":
                labels.append(-1.0)
            else:
                raise ParseError(f"bad label {label_tok!r}", line_no)
            entries = {}
            for tok in tokens[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"bad feature token {tok!r}", line_no) from None
                if idx < 1:
                    raise ParseError(f"feature index {idx} must be >= 1", line_no)
                if idx in entries:
                    raise ParseError(f"duplicate feature index {idx}", line_no)
                entries[idx] = val
            rows.append(entries)
            if entries:
                max_idx = max(max_idx, max(entries))
    if not rows:
        raise EmptyDataset(str(path))
    A = np.zeros((len(rows), max(max_idx, 1)))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            A[i, idx - 1] = val
    if row_normalize:
        norms = np.linalg.norm(A, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        A = A / norms
    if rescale_global:
        gram_norm = spectral_norm(A) ** 2
        if gram_norm > 0:
            A = A / np.sqrt(gram_norm)
    return LogisticProblem(data=A, labels=np.asarray(labels), mu=mu)


def dump_dataset(path, problem: LogisticProblem):
    """Write a LogisticProblem in the sparse classification text format."""
    with open(path, "w", encoding="ascii") as fh:
        for row, label in zip(problem.data, problem.labels):
            parts = ["+1" if label > 0 else "-1"]
            parts += [f"{j + 1}:{v:.17g}" for j, v in enumerate(row) if v != 0.0]
            fh.write(" ".join(parts) + "\n")


def _scalar_logistic_prox(w, t, label, tol, max_iter=100):
    # prox of u -> log(1 + exp(-label*u)) with parameter t at point w,
    # safeguarded Newton on psi'(u) = (u - w)/t - label*sigmoid(-label*u)
    lo, hi = w - t, w + t  # |phi'| <= 1 brackets the root
    u = w

    def dpsi(u):
        return (u - w) / t - label * _sigmoid(-label * u)

    for it in range(max_iter):
        g = dpsi(u)
        if abs(g) <= tol:
            return u, True
        if g > 0:
            hi = u
        else:
            lo = u
        s = _sigmoid(label * u)
        curvature = 1.0 / t + s * (1.0 - s)
        step = g / curvature
        u_new = u - step
        if not (lo < u_new < hi):
            u_new = 0.5 * (lo + hi)
        u = u_new
    return u, abs(dpsi(u)) <= tol


def logistic_dual_prox(z, sigma, labels, tol=1e-10):
    """Approximate prox of the conjugate logistic loss, coordinatewise.

    Computed through the Moreau identity from the primal prox, each
    coordinate solved by safeguarded 1-d Newton (at most 100 iterations).
    Returns (value, n_failures) where n_failures counts coordinates that
    missed the tolerance; failures are diagnostic, not fatal.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = np.asarray(z, dtype=float)
    t = 1.0 / sigma
    w = z / sigma
    out = np.empty_like(z)
    failures = 0
    for i in range(len(z)):
        u, ok = _scalar_logistic_prox(w[i], t, labels[i], tol)
        out[i] = u
        failures += not ok
    return z - sigma * out, failures


# ---------------------------------------------------------------------------
# total-variation denoising


def tv_gradient(image):
    """Forward-difference gradient field with Neumann boundary, (h, w, 2)."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    field = np.zeros((h, w, 2))
    field[:-1, :, 0] = image[1:, :] - image[:-1, :]
    field[:, :-1, 1] = image[:, 1:] - image[:, :-1]
    return field


def tv_divergence(field):
    """Negative adjoint of tv_gradient: <grad x, p> = -<x, div p> exactly."""
    field = np.asarray(field, dtype=float)
    p1 = field[:, :, 0]
    p2 = field[:, :, 1]
    div = np.zeros(p1.shape)
    div[:-1, :] += p1[:-1, :]
    div[1:, :] -= p1[:-1, :]
    div[:, :-1] += p2[:, :-1]
    div[:, 1:] -= p2[:, :-1]
    return div


def tv_dual_prox(field):
    """Pointwise projection of a 2-channel field onto unit magnitude."""
    field = np.asarray(field, dtype=float)
    mag = np.sqrt((field**2).sum(axis=2))
    return field / np.maximum(1.0, mag)[:, :, None]


@dataclass(frozen=True)
class TVDenoiseProblem:
    """min_x sum |grad x| + mu/2 ||x - b||^2 over images x."""

    noisy: np.ndarray
    mu: float
    ground_truth: np.ndarray | None = None
    grad_norm_sq: float = TV_GRAD_NORM_SQ

    @property
    def shape(self):
        return self.noisy.shape

    def primal_value(self, x):
        return tv_primal_value(x, self)


def tv_primal_value(x, problem: TVDenoiseProblem):
    """Total variation plus quadratic fidelity to the noisy input."""
    x = np.asarray(x, dtype=float)
    if x.shape != problem.noisy.shape:
        raise ValueError("image shape mismatch")
    field = tv_gradient(x)
    tv = np.sqrt((field**2).sum(axis=2)).sum()
    fid = 0.5 * problem.mu * float(((x - problem.noisy) ** 2).sum())
    return float(tv) + fid


def noisy_image(seed, h, w, noise_level, mu=8.0):
    """Piecewise-constant synthetic image plus Gaussian noise, in [0, 1].

    The ground truth is a flat background with 2 to 4 constant-intensity
    rectangles, the structure total variation favors.
    """
    if noise_level < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    truth = np.full((h, w), 0.2)
    for _ in range(rng.integers(2, 5)):
        top = int(rng.integers(0, max(h - 2, 1)))
        left = int(rng.integers(0, max(w - 2, 1)))
        bottom = int(rng.integers(top + 1, h))
        right = int(rng.integers(left + 1, w))
        truth[top:bottom, left:right] = rng.uniform(0.35, 0.95)
    noisy = truth + noise_level * rng.standard_normal((h, w))
    noisy = np.clip(noisy, 0.0, 1.0)
    return TVDenoiseProblem(noisy=noisy, mu=mu, ground_truth=truth)


# ---------------------------------------------------------------------------
# PGM image files (P2 ascii / P5 binary)


def read_pgm(path):
    """Read a P2/P5 PGM file into floats in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and comments
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise ValueError("not a P2/P5 PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] == b"P2":
        values = np.array(data[pos:].split(), dtype=float)
    else:
        pos += 1  # single whitespace after maxval
        values = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).astype(float)
    if values.size != w * h:
        raise ValueError("pixel count mismatch")
    return values.reshape(h, w) / maxval


def write_pgm(path, image, binary=True):
    """Write floats in [0, 1] as an 8-bit PGM file."""
    image = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    pixels = np.round(image * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n255\n".encode("ascii"))
            for row in pixels:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode("ascii"))
