"""Dataset and reference-field generators for the desk-scale tasks."""
import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..constraints import CorridorConstraint, DarcyConstraint, SpectrumConstraint
from ..errors import KernelNotPSD, NotPositiveDefinite
from ..fields import GaussianMixtureField, StationaryGaussianField
from ..numcore import cholesky

log = logging.getLogger(__name__)

LATERAL_RANGE = (-6.0, 6.0)


class GPTrajectorySpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_x: int = Field(64, ge=2)
    variance: float = Field(0.4, gt=0)
    length_scale: float = Field(0.1, gt=0)
    slope: float = 10.0
    jitter: float = Field(1e-8, ge=0)
    n_spans: int = Field(4, ge=1)
    span_length: int = Field(0, ge=0)
    width_range: Tuple[float, float] = (0.12, 0.25)
    lateral_range: Tuple[float, float] = LATERAL_RANGE

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.n_x)

    @property
    def span_len(self):
        return self.span_length or max(1, self.n_x // 16)


class DarcyGenSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(16, ge=3)
    modes: int = Field(32, ge=1)
    length_scale: float = Field(0.1, gt=0)
    r_src: float = 10.0
    w: float = 0.125


class SpectrumGenSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(64, ge=4)
    beta: float = Field(5.0 / 3.0, gt=0)
    amplitude: float = Field(1.0, gt=0)


def rbf_kernel(x, variance, length_scale):
    d = x[:, None] - x[None, :]
    return variance * np.exp(-(d**2) / (2 * length_scale**2))


def gen_gp_mixture_field(spec=GPTrajectorySpec()):
    """Two-component GP mixture with means ``±(slope·x − slope/2)`` and a
    shared RBF covariance; the returned field is the exact drift for this law."""
    x = spec.grid
    S = rbf_kernel(x, spec.variance, spec.length_scale) + spec.jitter * np.eye(x.size)
    try:
        L = cholesky(S)
    except NotPositiveDefinite as exc:
        raise KernelNotPSD(str(exc)) from None
    m1 = spec.slope * x - spec.slope / 2
    return GaussianMixtureField([0.5, 0.5], [m1, -m1], [L, L])


def gen_corridors(spec, rng):
    """``n_spans`` disjoint spans, one per equal block of the grid, each with
    a corridor whose width is a uniform fraction of the lateral range."""
    n, length = spec.n_x, spec.span_len
    block = n // spec.n_spans
    if block < length:
        raise ValueError("grid too small for the requested spans")
    lo_r, hi_r = spec.lateral_range
    extent = hi_r - lo_r
    spans = []
    for b in range(spec.n_spans):
        start = b * block + int(rng.integers(0, block - length + 1))
        width = rng.uniform(*spec.width_range) * extent
        center = rng.uniform(lo_r + width / 2, hi_r - width / 2)
        spans.append((np.arange(start, start + length), center - width / 2, center + width / 2))
    return CorridorConstraint(spans, n)


def kink_metric(F):
    """Largest absolute discrete second difference per sample."""
    F = np.atleast_2d(F)
    return np.max(np.abs(F[:, 2:] - 2 * F[:, 1:-1] + F[:, :-2]), axis=1)


class KLBasis:
    """Top-``s`` eigenpairs of the exponential kernel on the grid."""

    def __init__(self, n, modes, length_scale):
        x = np.linspace(0.0, 1.0, n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        lam, phi = np.linalg.eigh(np.exp(-dist / length_scale))
        order = np.argsort(lam)[::-1][:modes]
        self.eigvals = np.clip(lam[order], 0.0, None)
        self.eigvecs = phi[:, order]

    def sample(self, z):
        return (np.atleast_2d(z) * np.sqrt(self.eigvals)) @ self.eigvecs.T


def darcy_pressure_solve(constraint, G):
    """Least-squares pressure for log-permeabilities ``G`` (batch, n²).

    Rows: interior residual = 0, boundary normal differences = 0, mean = 0,
    equally weighted. The operator is linear in ``p`` for fixed ``K``, so it
    is assembled densely per sample and handed to ``lstsq``. Returns
    ``(P, converged)``; ``converged`` is false where the solve produced
    non-finite values.
    """
    c = constraint
    n = c.n
    n2 = n * n
    G = np.atleast_2d(np.asarray(G, dtype=float))
    E = np.eye(n2).reshape(n2, n, n)
    rhs = np.zeros(n2 + 1)
    rhs[:n2] = np.pad(c.source[1:-1, 1:-1], 1).ravel()
    out = np.empty((G.shape[0], n2))
    for i, g in enumerate(G):
        K = np.exp(g.reshape(1, n, n))
        cols = c.bnd(E)
        cols[:, 1:-1, 1:-1] = -K[:, 1:-1, 1:-1] * c.lap(E) - c.dx(K) * c.dx(E) - c.dy(K) * c.dy(E)
        A = np.vstack([cols.reshape(n2, n2).T, np.full((1, n2), 1.0 / n2)])
        out[i] = np.linalg.lstsq(A, rhs, rcond=None)[0]
    out -= out.mean(axis=1, keepdims=True)
    return out, np.all(np.isfinite(out), axis=1)


def gen_darcy_pairs(spec, rng, count):
    """``count`` states ``[log K, p]`` with Gaussian-random-field
    log-permeability and least-squares pressure."""
    basis = KLBasis(spec.n, spec.modes, spec.length_scale)
    c = DarcyConstraint(spec.n, spec.r_src, spec.w)
    out = []
    need = int(count)
    attempts = 0
    while need > 0:
        z = rng.normal((need, spec.modes))
        G = basis.sample(z)
        P, ok = darcy_pressure_solve(c, G)
        if not ok.all():
            log.warning("pressure solve failed for %d draws; regenerating", int((~ok).sum()))
        out.append(np.hstack([G[ok], P[ok]]))
        need -= int(ok.sum())
        attempts += 1
        if attempts > 50:
            raise RuntimeError("pressure solve keeps failing")
    return np.vstack(out)[:count]


def gen_spectrum_field(spec, rng, count=None):
    """Random-phase field whose binned energy spectrum is ``C k^{-β}``.

    Mode ``k'`` in shell ``k`` gets magnitude ``|k'| sqrt(2 C k^{-β} / N_k)``;
    phases are uniform and Hermitian symmetry makes the field real.
    """
    n = spec.n
    c = SpectrumConstraint(n, band=(1, 1))
    shell = c.shell
    counts = c.shell_count
    amp = np.zeros((n, n))
    valid = shell >= 1
    ks = shell[valid]
    amp[valid] = c.kmag[valid] * np.sqrt(2 * spec.amplitude * ks.astype(float) ** (-spec.beta) / counts[ks])
    m = 1 if count is None else int(count)
    raw = rng.uniform(0.0, 2 * np.pi, (m, n, n))
    neg = (-np.arange(n)) % n
    idx = np.arange(n * n).reshape(n, n)
    rep = idx < idx[neg][:, neg]
    phase = np.where(rep, raw, -raw[:, neg][:, :, neg])
    F = amp * np.exp(1j * phase)
    W = np.real(np.fft.ifft2(F, axes=(-2, -1)))
    return W[0] if count is None else W.reshape(m, -1)


def fit_gaussian_reference(samples, jitter=1e-6, max_jitter=1e-2):
    """One-component mixture field from the empirical mean and covariance."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False).reshape(X.shape[1], X.shape[1])
    j = jitter
    while True:
        try:
            L = cholesky(cov + j * np.eye(X.shape[1]), sym_tol=1e-10)
            break
        except NotPositiveDefinite:
            if j >= max_jitter:
                raise
            j *= 10
    return GaussianMixtureField([1.0], [mean], [L])


def fit_stationary_gaussian(samples, n):
    """Gaussian fit restricted to translation-invariant covariances on an
    ``n × n`` periodic grid: a spatially constant mean and per-mode spectral
    variances."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    mean = np.full(n * n, X.mean())
    F = np.fft.fft2((X - mean).reshape(-1, n, n), axes=(-2, -1))
    var = np.mean(np.abs(F) ** 2, axis=0) / (n * n)
    return StationaryGaussianField(n, mean, var)
