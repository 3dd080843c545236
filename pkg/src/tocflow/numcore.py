"""Numerical substrate: factorizations, seeded sampling, quadrature, CG, FFT
and a finite-difference gradient checker.

Dense vectors and matrices are plain ``numpy`` float arrays throughout the
package; the helpers here validate and operate on them.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import NotPositiveDefinite, NumericalBreakdown, ShapeError

DEFAULT_QUAD_PANELS = 1024


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Two streams built from the same pair produce bit-identical draws. Each
    concurrent worker should derive its own ``stream_id`` rather than share
    one stream.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def spawn(self, child_id):
        """Independent child stream, deterministic in ``child_id``."""
        return RngStream(self.seed, self.stream_id * 1_000_003 + int(child_id) + 1)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_vector(x, name="x"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    return v


def cholesky(a, sym_tol=1e-12):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises NotPositiveDefinite when a pivot is not strictly positive.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"cholesky needs a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * scale:
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


@dataclass
class CGResult:
    """Outcome of :func:`cg_solve`.

    For batched right-hand sides ``converged`` and ``iterations`` are
    per-row arrays.
    """

    x: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    breakdown: bool = False

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def cg_solve(apply, b, tol=1e-8, max_iter=None, x0=None, on_breakdown="raise"):
    """Conjugate gradients for a symmetric positive-definite operator.

    ``b`` may be a vector or a ``(batch, n)`` array; in the batched case
    ``apply`` must map ``(batch, n)`` arrays row by row and each row is an
    independent system with its own step sizes and stopping test
    ``||apply(x) - b|| <= tol * ||b||``.

    A NaN iterate raises NumericalBreakdown when ``on_breakdown="raise"``;
    with ``on_breakdown="flag"`` the last finite iterate is returned with
    ``breakdown=True``. Non-positive curvature always stops the affected
    rows and sets the flag.
    """
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = np.atleast_2d(b)
    nb, n = B.shape
    if max_iter is None:
        max_iter = n
    max_iter = int(max_iter)

    def op(v):
        out = apply(v[0] if single else v)
        return np.atleast_2d(np.asarray(out, dtype=float))

    X = np.zeros_like(B) if x0 is None else np.atleast_2d(np.array(x0, dtype=float))
    R = B - op(X) if x0 is not None else B.copy()
    P = R.copy()
    rr = _rowdot(R, R)
    bnorm = np.sqrt(_rowdot(B, B))
    target = tol * bnorm
    active = np.sqrt(rr) > target
    converged = ~active
    iters = np.zeros(nb, dtype=int)
    breakdown = False

    for _ in range(max_iter):
        if not active.any():
            break
        AP = op(P)
        pap = _rowdot(P, AP)
        bad_curv = active & ~(pap > 0)
        if bad_curv.any():
            breakdown = True
            active &= ~bad_curv
        alpha = np.where(active, rr / np.where(pap > 0, pap, 1.0), 0.0)
        X_new = X + alpha[:, None] * P
        R_new = R - alpha[:, None] * AP
        if not (np.all(np.isfinite(X_new)) and np.all(np.isfinite(R_new))):
            if on_breakdown == "raise":
                raise NumericalBreakdown("non-finite conjugate-gradient iterate")
            breakdown = True
            break
        X, R = X_new, R_new
        iters += active
        rr_new = _rowdot(R, R)
        done = active & (np.sqrt(rr_new) <= target)
        converged |= done
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        P = np.where(active[:, None], R + beta[:, None] * P, P)
        rr = np.where(active, rr_new, rr)
        active &= ~done

    if single:
        return CGResult(X[0], np.bool_(converged[0]), np.int64(iters[0]), breakdown)
    return CGResult(X, converged, iters, breakdown)


def simpson_quad(f, a, b, n=DEFAULT_QUAD_PANELS):
    """Composite Simpson rule with ``n`` (even) panels on ``[a, b]``.

    ``f`` is evaluated on the node array when it accepts arrays, otherwise
    point by point.
    """
    n = int(n)
    if n < 2 or n % 2:
        raise ValueError("simpson_quad needs an even panel count n >= 2")
    if b < a:
        raise ValueError("simpson_quad needs a <= b")
    if a == b:
        return 0.0
    nodes = np.linspace(a, b, n + 1)
    try:
        y = np.asarray(f(nodes), dtype=float)
        if y.shape != nodes.shape:
            raise TypeError
    except (TypeError, ValueError):
        y = np.array([float(f(t)) for t in nodes])
    return float(integrate.simpson(y, x=nodes))


def dft2(field, direction="forward"):
    """Unnormalized 2-D DFT. ``inverse(forward(x)) == x * rows * cols``."""
    a = np.asarray(field)
    if a.ndim < 2:
        raise ShapeError(f"dft2 needs a 2-D field (optionally batched), got shape {a.shape}")
    rows, cols = a.shape[-2:]
    if rows == 0 or cols == 0:
        raise ShapeError("dft2 needs a non-empty field")
    if direction == "forward":
        return np.fft.fft2(a, axes=(-2, -1))
    if direction == "inverse":
        return np.fft.ifft2(a, axes=(-2, -1)) * (rows * cols)
    raise ValueError(f"unknown dft2 direction {direction!r}")


def gauss_sample(rng, mean, chol, size=None):
    """``mean + chol @ z`` with standard normal ``z`` drawn from ``rng``.

    With ``size`` given, returns a ``(size, d)`` array of draws.
    """
    mean = as_vector(mean, "mean")
    chol = np.asarray(chol, dtype=float)
    if chol.shape != (mean.size, mean.size):
        raise ShapeError(f"chol shape {chol.shape} does not match mean dim {mean.size}")
    if size is None:
        return mean + chol @ rng.normal(mean.size)
    z = rng.normal((int(size), mean.size))
    return mean + z @ chol.T


def grad_check(f, grad, x, eps=1e-5, floor=1e-3):
    """Largest relative gap between ``grad(x)`` and central differences.

    The gap at coordinate ``i`` is divided by ``max(|fd_i|, floor*||fd||_inf)``
    so that coordinates with negligible derivative do not amplify rounding
    noise.
    """
    x = np.array(x, dtype=float)
    g = np.asarray(grad(x), dtype=float).reshape(x.shape)
    flat = x.reshape(-1)
    fd = np.empty(flat.size)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = float(f(x))
        flat[i] = old - eps
        fm = float(f(x))
        flat[i] = old
        fd[i] = (fp - fm) / (2.0 * eps)
    g = g.reshape(-1)
    scale = np.max(np.abs(fd)) if fd.size else 0.0
    denom = np.maximum(np.abs(fd), max(floor * scale, 1e-300))
    if scale == 0.0:
        return float(np.max(np.abs(g))) if g.size else 0.0
    return float(np.max(np.abs(g - fd) / denom))


def adjoint_gap(u, jv, vjp_u, v):
    """Relative mismatch of ``<u, J v>`` and ``<J^T u, v>``."""
    lhs = float(np.vdot(u, jv))
    rhs = float(np.vdot(vjp_u, v))
    scale = max(np.linalg.norm(u) * np.linalg.norm(jv), np.linalg.norm(vjp_u) * np.linalg.norm(v), 1e-300)
    return abs(lhs - rhs) / scale
