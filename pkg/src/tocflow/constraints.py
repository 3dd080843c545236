"""Constraint residual maps h: R^d -> R^r, their Jacobian products and the
terminal cost H = ½‖h‖².

Like the fields, every constraint accepts a single state ``(d,)`` or a batch
``(batch, d)``.
"""
import numpy as np

from .errors import GridTooSmall, ShapeError
from .numcore import dft2


class Constraint:
    dim = None
    rdim = None

    def _wrap(self, fn, x, *extra, out_single=True):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.dim:
            raise ShapeError(f"expected state dimension {self.dim}, got shape {X.shape}")
        args = []
        for e, width in extra:
            E = np.asarray(e, dtype=float)
            E2 = E[None, :] if E.ndim == 1 else E
            if E2.shape[1] != width:
                raise ShapeError(f"expected seed dimension {width}, got shape {E.shape}")
            args.append(np.broadcast_to(E2, (X2.shape[0], width)))
        out = fn(X2, *args)
        return out[0] if single and out_single else out

    def residual(self, x):
        return self._wrap(self._residual, x)

    def jvp(self, x, v):
        return self._wrap(self._jvp, x, (v, self.dim))

    def vjp(self, x, u):
        return self._wrap(self._vjp, x, (u, self.rdim))

    def terminal_cost(self, x):
        h = np.asarray(self.residual(x))
        return 0.5 * np.sum(h * h, axis=-1)

    def cost_grad(self, x):
        return self.vjp(x, self.residual(x))

    def residual_norm(self, x):
        return np.linalg.norm(np.asarray(self.residual(x)), axis=-1)

    def to_dict(self):
        raise NotImplementedError


def terminal_cost(constraint, x):
    """``½ Σ h_i(x)²``."""
    return constraint.terminal_cost(x)


class NullConstraint(Constraint):
    """``h ≡ 0``: every state is feasible."""

    def __init__(self, dim):
        self.dim = int(dim)
        self.rdim = 1

    def _residual(self, X):
        return np.zeros((X.shape[0], 1))

    def _jvp(self, X, V):
        return np.zeros((X.shape[0], 1))

    def _vjp(self, X, U):
        return np.zeros_like(X)

    def to_dict(self):
        return {"type": "null", "dim": self.dim}


class CoordinateEquality(Constraint):
    """``h(x) = x_I − y``."""

    def __init__(self, indices, targets, dim):
        self.indices = np.array(indices, dtype=int).reshape(-1)
        self.targets = np.broadcast_to(np.array(targets, dtype=float), self.indices.shape).copy()
        self.dim = int(dim)
        if len(set(self.indices.tolist())) != self.indices.size:
            raise ValueError("indices must be distinct")
        if self.indices.size == 0 or self.indices.min() < 0 or self.indices.max() >= self.dim:
            raise ValueError("indices must lie in [0, d)")
        self.rdim = self.indices.size

    def _residual(self, X):
        return X[:, self.indices] - self.targets

    def _jvp(self, X, V):
        return V[:, self.indices].copy()

    def _vjp(self, X, U):
        out = np.zeros_like(X)
        out[:, self.indices] = U
        return out

    def to_dict(self):
        return {"type": "coordinate_equality", "indices": self.indices.tolist(),
                "targets": self.targets.tolist(), "dim": self.dim}


class LinearConstraint(Constraint):
    """``h(x) = A x − c``."""

    def __init__(self, A, c=None):
        self.A = np.atleast_2d(np.array(A, dtype=float))
        self.rdim, self.dim = self.A.shape
        self.c = np.zeros(self.rdim) if c is None else np.array(c, dtype=float).reshape(-1)

    def _residual(self, X):
        return X @ self.A.T - self.c

    def _jvp(self, X, V):
        return V @ self.A.T

    def _vjp(self, X, U):
        return U @ self.A

    def to_dict(self):
        return {"type": "linear", "A": self.A.tolist(), "c": self.c.tolist()}


class CorridorConstraint(Constraint):
    """Scaled pointwise corridor violations.

    ``spans`` is a list of ``(indices, lower, upper)``; the residual has one
    entry per constrained index, ``(max(0, ℓ−f) + max(0, f−u)) / √|T|``. At a
    kink the derivative is taken as 0.
    """

    def __init__(self, spans, dim):
        self.dim = int(dim)
        self.spans = []
        idx, lo, hi = [], [], []
        for indices, lower, upper in spans:
            ind = np.array(indices, dtype=int).reshape(-1)
            if not lower < upper:
                raise ValueError("corridor needs lower < upper")
            if ind.size == 0 or ind.min() < 0 or ind.max() >= self.dim:
                raise ValueError("corridor indices must lie in [0, d)")
            self.spans.append((ind, float(lower), float(upper)))
            idx.append(ind)
            lo.append(np.full(ind.size, float(lower)))
            hi.append(np.full(ind.size, float(upper)))
        self.index = np.concatenate(idx)
        self.lower = np.concatenate(lo)
        self.upper = np.concatenate(hi)
        self.rdim = self.index.size
        self.scale = 1.0 / np.sqrt(self.rdim)

    def _slope(self, F):
        return self.scale * (np.where(F > self.upper, 1.0, 0.0) - np.where(F < self.lower, 1.0, 0.0))

    def _residual(self, X):
        F = X[:, self.index]
        return self.scale * (np.maximum(0.0, self.lower - F) + np.maximum(0.0, F - self.upper))

    def _jvp(self, X, V):
        return self._slope(X[:, self.index]) * V[:, self.index]

    def _vjp(self, X, U):
        out = np.zeros_like(X)
        np.add.at(out, (slice(None), self.index), self._slope(X[:, self.index]) * U)
        return out

    def to_dict(self):
        return {"type": "corridor", "dim": self.dim,
                "spans": [{"indices": i.tolist(), "lower": lo, "upper": hi} for i, lo, hi in self.spans]}


def darcy_source(n, r_src=10.0, w=0.125):
    """Piecewise-constant source: ``+r`` on the lower-left corner square of
    side ``w``, ``−r`` on the upper-right one, 0 elsewhere."""
    x = np.linspace(0.0, 1.0, n)
    lo = np.abs(x - w / 2) <= w / 2
    hi = np.abs(x - (1 - w / 2)) <= w / 2
    f = np.zeros((n, n))
    f[np.ix_(lo, lo)] = r_src
    f[np.ix_(hi, hi)] = -r_src
    return f


class DarcyConstraint(Constraint):
    """Discrete Darcy residual on an ``n × n`` grid with spacing 1/(n−1).

    State layout: the K channel (log-permeability by default) followed by the
    pressure channel, both row-major. Interior points carry
    ``−K Lap p − DK·Dp − f`` with central differences; boundary points carry
    the first-order outward normal difference of ``p`` (corners: the sum of
    both edges). Pressure is mean-centered first.
    """

    def __init__(self, n=16, r_src=10.0, w=0.125, log_permeability=True):
        n = int(n)
        if n < 3:
            raise GridTooSmall(f"Darcy grid needs n >= 3, got {n}")
        self.n = n
        self.delta = 1.0 / (n - 1)
        self.r_src = float(r_src)
        self.w = float(w)
        self.log_permeability = bool(log_permeability)
        self.dim = 2 * n * n
        self.rdim = n * n
        self.source = darcy_source(n, self.r_src, self.w)

    # --- stencils on (batch, n, n) arrays; interior results are (batch, n-2, n-2)
    def lap(self, P):
        c = P[:, 1:-1, 1:-1]
        return (P[:, 2:, 1:-1] + P[:, :-2, 1:-1] + P[:, 1:-1, 2:] + P[:, 1:-1, :-2] - 4 * c) / self.delta**2

    def lap_t(self, R):
        out = np.zeros((R.shape[0], self.n, self.n))
        s = R / self.delta**2
        out[:, 2:, 1:-1] += s
        out[:, :-2, 1:-1] += s
        out[:, 1:-1, 2:] += s
        out[:, 1:-1, :-2] += s
        out[:, 1:-1, 1:-1] -= 4 * s
        return out

    def dx(self, P):
        return (P[:, 2:, 1:-1] - P[:, :-2, 1:-1]) / (2 * self.delta)

    def dx_t(self, R):
        out = np.zeros((R.shape[0], self.n, self.n))
        s = R / (2 * self.delta)
        out[:, 2:, 1:-1] += s
        out[:, :-2, 1:-1] -= s
        return out

    def dy(self, P):
        return (P[:, 1:-1, 2:] - P[:, 1:-1, :-2]) / (2 * self.delta)

    def dy_t(self, R):
        out = np.zeros((R.shape[0], self.n, self.n))
        s = R / (2 * self.delta)
        out[:, 1:-1, 2:] += s
        out[:, 1:-1, :-2] -= s
        return out

    def bnd(self, P):
        out = np.zeros_like(P)
        d = self.delta
        out[:, 0, :] += (P[:, 0, :] - P[:, 1, :]) / d
        out[:, -1, :] += (P[:, -1, :] - P[:, -2, :]) / d
        out[:, :, 0] += (P[:, :, 0] - P[:, :, 1]) / d
        out[:, :, -1] += (P[:, :, -1] - P[:, :, -2]) / d
        return out

    def bnd_t(self, U):
        out = np.zeros_like(U)
        d = self.delta
        out[:, 0, :] += U[:, 0, :] / d
        out[:, 1, :] -= U[:, 0, :] / d
        out[:, -1, :] += U[:, -1, :] / d
        out[:, -2, :] -= U[:, -1, :] / d
        out[:, :, 0] += U[:, :, 0] / d
        out[:, :, 1] -= U[:, :, 0] / d
        out[:, :, -1] += U[:, :, -1] / d
        out[:, :, -2] -= U[:, :, -1] / d
        return out

    def split(self, X):
        n2 = self.n * self.n
        G = X[:, :n2].reshape(-1, self.n, self.n)
        P = X[:, n2:].reshape(-1, self.n, self.n)
        return G, P

    def permeability(self, G):
        return np.exp(G) if self.log_permeability else G

    @staticmethod
    def _center(P):
        return P - P.mean(axis=(1, 2), keepdims=True)

    def _residual(self, X):
        G, P = self.split(X)
        K = self.permeability(G)
        Pc = self._center(P)
        out = self.bnd(Pc)
        out[:, 1:-1, 1:-1] = (-K[:, 1:-1, 1:-1] * self.lap(Pc) - self.dx(K) * self.dx(Pc)
                              - self.dy(K) * self.dy(Pc) - self.source[1:-1, 1:-1])
        return out.reshape(X.shape[0], -1)

    def _jvp(self, X, V):
        G, P = self.split(X)
        dG, dP = self.split(V)
        K = self.permeability(G)
        dK = K * dG if self.log_permeability else dG
        Pc, dPc = self._center(P), self._center(dP)
        out = self.bnd(dPc)
        out[:, 1:-1, 1:-1] = (-dK[:, 1:-1, 1:-1] * self.lap(Pc) - K[:, 1:-1, 1:-1] * self.lap(dPc)
                              - self.dx(dK) * self.dx(Pc) - self.dx(K) * self.dx(dPc)
                              - self.dy(dK) * self.dy(Pc) - self.dy(K) * self.dy(dPc))
        return out.reshape(X.shape[0], -1)

    def _vjp(self, X, U):
        G, P = self.split(X)
        K = self.permeability(G)
        Pc = self._center(P)
        Ug = U.reshape(-1, self.n, self.n)
        Ui = Ug[:, 1:-1, 1:-1]
        Ub = Ug.copy()
        Ub[:, 1:-1, 1:-1] = 0.0
        gK = self.dx_t(-Ui * self.dx(Pc)) + self.dy_t(-Ui * self.dy(Pc))
        gK[:, 1:-1, 1:-1] += -Ui * self.lap(Pc)
        gP = (self.lap_t(-Ui * K[:, 1:-1, 1:-1]) + self.dx_t(-Ui * self.dx(K))
              + self.dy_t(-Ui * self.dy(K)) + self.bnd_t(Ub))
        gP = self._center(gP)
        gG = K * gK if self.log_permeability else gK
        return np.hstack([gG.reshape(X.shape[0], -1), gP.reshape(X.shape[0], -1)])

    def to_dict(self):
        return {"type": "darcy", "n": self.n, "r_src": self.r_src, "w": self.w,
                "log_permeability": self.log_permeability}


class SpectrumConstraint(Constraint):
    """Scalar spectral-slope residual: variance over the band of the
    compensated spectrum ``log E(k) + slope·log k``.

    ``E(k) = ½ Σ_{k ≤ |k'| < k+1} |ω̂(k')|² / |k'|²`` (the division is dropped
    with ``velocity=False``).
    """

    def __init__(self, n=64, band=(2, 9), slope=5.0 / 3.0, velocity=True, floor=1e-30):
        self.n = int(n)
        self.dim = self.n * self.n
        self.rdim = 1
        self.band = (int(band[0]), int(band[1]))
        if not 1 <= self.band[0] <= self.band[1] < self.n // 2:
            raise ValueError(f"band {self.band} must lie within shells [1, {self.n // 2})")
        self.slope = float(slope)
        self.velocity = bool(velocity)
        self.floor = float(floor)
        k = np.fft.fftfreq(self.n) * self.n
        kmag = np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)
        self.kmag = kmag
        shell = np.floor(kmag).astype(int)
        shell[(kmag == 0) | (shell >= self.n // 2)] = -1
        self.shell = shell
        self.nshell = self.n // 2
        with np.errstate(divide="ignore"):
            w = np.where(kmag > 0, 1.0 / np.where(kmag > 0, kmag, 1.0) ** 2, 0.0)
        self.mode_weight = np.where(shell >= 1, w if self.velocity else 1.0, 0.0)
        self.band_k = np.arange(self.band[0], self.band[1] + 1)
        self.shell_count = np.bincount(shell[shell >= 1].ravel(), minlength=self.nshell)
        flat = shell.ravel()
        self._binning = np.zeros((self.dim, self.nshell))
        self._binning[np.flatnonzero(flat >= 1), flat[flat >= 1]] = 1.0

    def _flat(self, x):
        a = np.asarray(x, dtype=float)
        if a.ndim >= 2 and a.shape[-2:] == (self.n, self.n):
            return a.reshape(a.shape[:-2] + (self.dim,))
        return a

    def residual(self, x):
        return super().residual(self._flat(x))

    def jvp(self, x, v):
        return super().jvp(self._flat(x), self._flat(v))

    def vjp(self, x, u):
        return super().vjp(self._flat(x), u)

    def _spectrum(self, W):
        """``E`` of shape (batch, n/2) indexed by shell; entry 0 unused."""
        F = dft2(W.reshape(-1, self.n, self.n))
        e = 0.5 * self.mode_weight * np.abs(F) ** 2
        return e.reshape(W.shape[0], -1) @ self._binning, F

    def energy_spectrum(self, omega):
        """Shell energies ``E(k)`` for ``k = 1 .. n/2 − 1``."""
        W = np.asarray(omega, dtype=float)
        single = W.ndim <= 2 and W.size == self.dim
        E, _ = self._spectrum(W.reshape(-1, self.dim))
        return E[0, 1:] if single else E[:, 1:]

    def _compensated(self, E):
        Eb = E[:, self.band_k]
        c = np.log(np.maximum(Eb, self.floor)) + self.slope * np.log(self.band_k)
        return c, Eb

    def _residual(self, X):
        E, _ = self._spectrum(X)
        c, _ = self._compensated(E)
        return np.var(c, axis=1)[:, None]

    def _mode_multiplier(self, X):
        E, F = self._spectrum(X)
        c, Eb = self._compensated(E)
        dc = 2.0 / c.shape[1] * (c - c.mean(axis=1, keepdims=True))
        dE = np.where(Eb > self.floor, dc / np.where(Eb > self.floor, Eb, 1.0), 0.0)
        per_shell = np.zeros((X.shape[0], self.nshell + 1))
        per_shell[:, self.band_k] = dE
        idx = np.where(self.shell >= 1, self.shell, self.nshell)
        M = per_shell[:, idx] * self.mode_weight
        return M, F

    def _jvp(self, X, V):
        M, F = self._mode_multiplier(X)
        Fv = dft2(V.reshape(-1, self.n, self.n))
        return np.sum(M * np.real(np.conj(F) * Fv), axis=(1, 2))[:, None]

    def _vjp(self, X, U):
        M, F = self._mode_multiplier(X)
        g = np.real(dft2(M * F, "inverse")).reshape(X.shape[0], -1)
        return g * U[:, :1]

    def to_dict(self):
        return {"type": "spectrum", "n": self.n, "band": list(self.band), "slope": self.slope,
                "velocity": self.velocity, "floor": self.floor}


def constraint_from_dict(spec):
    kind = spec.get("type")
    if kind == "null":
        return NullConstraint(spec["dim"])
    if kind == "coordinate_equality":
        return CoordinateEquality(spec["indices"], spec["targets"], spec["dim"])
    if kind == "linear":
        return LinearConstraint(spec["A"], spec.get("c"))
    if kind == "corridor":
        return CorridorConstraint([(s["indices"], s["lower"], s["upper"]) for s in spec["spans"]], spec["dim"])
    if kind == "darcy":
        return DarcyConstraint(spec.get("n", 16), spec.get("r_src", 10.0), spec.get("w", 0.125),
                               spec.get("log_permeability", True))
    if kind == "spectrum":
        return SpectrumConstraint(spec.get("n", 64), tuple(spec.get("band", (2, 9))), spec.get("slope", 5.0 / 3.0),
                                  spec.get("velocity", True), spec.get("floor", 1e-30))
    raise ValueError(f"unknown constraint type {kind!r}")
