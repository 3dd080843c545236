"""Reference velocity fields b*(x, t) with exact tangent and adjoint products,
plus the k-step Euler lookahead and the sensitivity chains through it.

All fields act on batches: ``x`` of shape ``(batch, d)`` or a single state of
shape ``(d,)``; ``t`` is a scalar time shared by the batch.
"""
import numpy as np

from .errors import LookaheadDiverged, ShapeError
from .numcore import cholesky

MIXTURE_EPS = 1e-10


def _batch(x, d):
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    a2 = a[None, :] if single else a
    if a2.ndim != 2 or a2.shape[1] != d:
        raise ShapeError(f"expected state dimension {d}, got shape {a.shape}")
    return a2, single


class VelocityField:
    """Interface: ``eval``, ``jvp`` (∂b/∂x · v) and ``vjp`` ((∂b/∂x)ᵀ · u)."""

    dim = None

    def eval(self, x, t):
        X, single = _batch(x, self.dim)
        out = self._eval(X, float(t))
        return out[0] if single else out

    def jvp(self, x, t, v):
        X, single = _batch(x, self.dim)
        V, _ = _batch(v, self.dim)
        out = self._jvp(X, float(t), np.broadcast_to(V, X.shape))
        return out[0] if single else out

    def vjp(self, x, t, u):
        X, single = _batch(x, self.dim)
        U, _ = _batch(u, self.dim)
        out = self._vjp(X, float(t), np.broadcast_to(U, X.shape))
        return out[0] if single else out

    def _eval(self, X, t):
        raise NotImplementedError

    def _jvp(self, X, t, V):
        raise NotImplementedError

    def _vjp(self, X, t, U):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class ZeroField(VelocityField):
    def __init__(self, dim):
        self.dim = int(dim)

    def _eval(self, X, t):
        return np.zeros_like(X)

    def _jvp(self, X, t, V):
        return np.zeros_like(X)

    _vjp = _jvp

    def to_dict(self):
        return {"type": "zero", "dim": self.dim}


class ConstantField(VelocityField):
    def __init__(self, c):
        self.c = np.array(c, dtype=float).reshape(-1)
        self.dim = self.c.size

    def _eval(self, X, t):
        return np.broadcast_to(self.c, X.shape).copy()

    def _jvp(self, X, t, V):
        return np.zeros_like(X)

    _vjp = _jvp

    def to_dict(self):
        return {"type": "constant", "c": self.c.tolist()}


class LinearField(VelocityField):
    """Time-independent affine drift ``b(x) = A x + c``."""

    def __init__(self, A, c=None):
        self.A = np.array(A, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ShapeError("LinearField needs a square matrix")
        self.dim = self.A.shape[0]
        self.c = np.zeros(self.dim) if c is None else np.array(c, dtype=float).reshape(-1)

    def _eval(self, X, t):
        return X @ self.A.T + self.c

    def _jvp(self, X, t, V):
        return V @ self.A.T

    def _vjp(self, X, t, U):
        return U @ self.A

    def to_dict(self):
        return {"type": "linear", "A": self.A.tolist(), "c": self.c.tolist()}


class Affine1DField(VelocityField):
    """Exact flow-matching drift from N(0, 1) to N(mu, sigma²), applied
    coordinatewise: ``b(x, t) = alpha(t) x + beta(t)``."""

    def __init__(self, mu, sigma, dim=1):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.dim = int(dim)

    def v(self, t):
        t = np.asarray(t, dtype=float)
        return np.sqrt((1 - t) ** 2 + t**2 * self.sigma**2)

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        v2 = (1 - t) ** 2 + t**2 * self.sigma**2
        return (t * self.sigma**2 - (1 - t)) / v2

    def beta(self, t):
        return self.mu * (1 - t * self.alpha(t))

    def flow_map(self, x, t):
        """Exact ``Φ_{t→1}(x) = (σ/v(t))(x − μt) + μ``."""
        return self.sigma / self.v(t) * (np.asarray(x, dtype=float) - self.mu * t) + self.mu

    def _eval(self, X, t):
        return self.alpha(t) * X + self.beta(t)

    def _jvp(self, X, t, V):
        return self.alpha(t) * V

    _vjp = _jvp

    def to_dict(self):
        return {"type": "affine1d", "mu": self.mu, "sigma": self.sigma, "dim": self.dim}


class GaussianMixtureField(VelocityField):
    """Closed-form conditional-mean drift for a Gaussian-mixture target
    ``Σ w_j N(m_j, S_j)`` under the linear interpolant from N(0, I).

    Each covariance is diagonalized once, ``S_j = U_j diag(lam_j) U_jᵀ``, so
    every ``V_j(t) = (1−t)² I + t² S_j + εI`` and ``B_j(t)`` is diagonal in
    the same basis.
    """

    def __init__(self, weights, means, chols, eps=MIXTURE_EPS):
        w = np.array(weights, dtype=float).reshape(-1)
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        self.weights = w / w.sum()
        self.means = np.array(means, dtype=float).reshape(len(w), -1)
        self.dim = self.means.shape[1]
        self.chols = [np.array(L, dtype=float).reshape(self.dim, self.dim) for L in chols]
        if len(self.chols) != len(w):
            raise ShapeError("one covariance factor per component is required")
        self.eps = float(eps)
        self._eig = []
        for L in self.chols:
            lam, U = np.linalg.eigh(L @ L.T)
            self._eig.append((np.clip(lam, 0.0, None), U))
        self._logw = np.log(self.weights)

    @classmethod
    def from_covariances(cls, weights, means, covs, eps=MIXTURE_EPS):
        return cls(weights, means, [cholesky(np.asarray(S, dtype=float)) for S in covs], eps)

    def _components(self, X, t):
        """Per-component pieces: y_j (eigen coords), diag(V_j), diag(B_j), log densities."""
        out = []
        logp = np.empty((X.shape[0], len(self.weights)))
        for j, (lam, U) in enumerate(self._eig):
            diff = X - t * self.means[j]
            y = diff @ U
            nu = (1 - t) ** 2 + t**2 * lam + self.eps
            beta = (t * lam - (1 - t)) / nu
            logp[:, j] = self._logw[j] - 0.5 * np.sum(y * y / nu, axis=1) - 0.5 * np.sum(np.log(nu))
            out.append((U, y, nu, beta))
        return out, logp

    def posterior_weights(self, x, t):
        X, single = _batch(x, self.dim)
        _, logp = self._components(X, float(t))
        p = _softmax(logp)
        return p[0] if single else p

    def _pieces(self, X, t):
        comps, logp = self._components(X, t)
        p = _softmax(logp)
        cs = []
        for j, (U, y, nu, beta) in enumerate(comps):
            cs.append(self.means[j] + (beta * y) @ U.T)
        b = sum(p[:, j : j + 1] * cs[j] for j in range(len(cs)))
        return comps, p, cs, b

    def _eval(self, X, t):
        return self._pieces(X, t)[3]

    def _jvp(self, X, t, V):
        comps, p, cs, b = self._pieces(X, t)
        out = np.zeros_like(X)
        for j, (U, y, nu, beta) in enumerate(comps):
            vU = V @ U
            out += p[:, j : j + 1] * ((beta * vU) @ U.T)
            gv = -np.sum(y / nu * vU, axis=1)
            out += (p[:, j] * gv)[:, None] * (cs[j] - b)
        return out

    def _vjp(self, X, t, U_in):
        comps, p, cs, b = self._pieces(X, t)
        out = np.zeros_like(X)
        for j, (U, y, nu, beta) in enumerate(comps):
            uU = U_in @ U
            cu = np.sum((cs[j] - b) * U_in, axis=1)
            out += ((p[:, j : j + 1] * beta * uU) - (p[:, j] * cu)[:, None] * (y / nu)) @ U.T
        return out

    def to_dict(self):
        return {
            "type": "gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "chols": [L.tolist() for L in self.chols],
            "eps": self.eps,
        }


def _softmax(logp):
    m = np.max(logp, axis=1, keepdims=True)
    e = np.exp(logp - m)
    return e / e.sum(axis=1, keepdims=True)


class StationaryGaussianField(VelocityField):
    """Single Gaussian target on a periodic ``n × n`` grid whose covariance is
    diagonal in the Fourier basis.

    ``spectrum_var[k]`` is the variance of the orthonormal Fourier coefficient
    at mode ``k``, i.e. the eigenvalue of the covariance. The drift applies the
    same formula as :class:`GaussianMixtureField` with a one-component mixture
    but diagonalizes with the FFT instead of a dense eigendecomposition.
    """

    def __init__(self, n, mean, spectrum_var, eps=MIXTURE_EPS):
        self.n = int(n)
        self.dim = self.n * self.n
        self.mean = np.array(mean, dtype=float).reshape(self.dim)
        var = np.array(spectrum_var, dtype=float).reshape(self.n, self.n)
        if np.any(var < 0):
            raise ValueError("spectral variances must be nonnegative")
        sym = var[(-np.arange(self.n)) % self.n][:, (-np.arange(self.n)) % self.n]
        self.spectrum_var = 0.5 * (var + sym)
        self.eps = float(eps)
        self._half = self.spectrum_var[:, : self.n // 2 + 1]

    def _multiplier(self, t):
        lam = self._half
        return (t * lam - (1 - t)) / ((1 - t) ** 2 + t**2 * lam + self.eps)

    def _apply(self, M, Y):
        n = self.n
        Yg = Y.reshape(-1, n, n)
        out = np.fft.irfft2(M * np.fft.rfft2(Yg), s=(n, n))
        return out.reshape(Y.shape)

    def _eval(self, X, t):
        return self.mean + self._apply(self._multiplier(t), X - t * self.mean)

    def _jvp(self, X, t, V):
        return self._apply(self._multiplier(t), V)

    _vjp = _jvp

    def to_dict(self):
        return {
            "type": "stationary_gaussian",
            "n": self.n,
            "mean": self.mean.tolist(),
            "spectrum_var": self.spectrum_var.tolist(),
            "eps": self.eps,
        }


class NeuralMLPField(VelocityField):
    """Fully connected network ``b_θ([x, t])`` with tanh hidden layers and a
    linear output layer. ``weights[l]`` has shape ``(out, in)``."""

    def __init__(self, weights, biases, activation="tanh"):
        if activation != "tanh":
            raise ValueError(f"unsupported activation {activation!r}")
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        self.activation = activation
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        self.dim = self.weights[-1].shape[0]
        if self.weights[0].shape[1] != self.dim + 1:
            raise ShapeError("first layer must take d + 1 inputs (state and time)")
        for W, b in zip(self.weights, self.biases):
            if W.shape[0] != b.size:
                raise ShapeError("bias length must match layer output")
        for W0, W1 in zip(self.weights[:-1], self.weights[1:]):
            if W1.shape[1] != W0.shape[0]:
                raise ShapeError("consecutive layer shapes do not chain")

    @classmethod
    def initialize(cls, dim, hidden, rng):
        """Glorot-uniform weights and zero biases."""
        sizes = [dim + 1] + list(hidden) + [dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, (fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def params(self):
        return self.weights + self.biases

    def forward(self, X, t):
        """Forward pass keeping every layer activation. ``t`` may be per-row."""
        tcol = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (X.shape[0], 1))
        acts = [np.hstack([X, tcol])]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.tanh(acts[-1] @ W.T + b))
        out = acts[-1] @ self.weights[-1].T + self.biases[-1]
        return out, acts

    def backward(self, acts, G):
        """Reverse pass from output cotangent ``G``.

        Returns ``(input cotangent, weight grads, bias grads)`` with parameter
        gradients summed over rows.
        """
        gW, gb = [None] * len(self.weights), [None] * len(self.weights)
        delta = G
        for li in range(len(self.weights) - 1, -1, -1):
            gW[li] = delta.T @ acts[li]
            gb[li] = delta.sum(axis=0)
            back = delta @ self.weights[li]
            if li > 0:
                delta = back * (1.0 - acts[li] ** 2)
            else:
                delta = back
        return delta, gW, gb

    def _eval(self, X, t):
        return self.forward(X, t)[0]

    def _jvp(self, X, t, V):
        _, acts = self.forward(X, t)
        dz = np.hstack([V, np.zeros((X.shape[0], 1))])
        for li, W in enumerate(self.weights[:-1]):
            dz = (dz @ W.T) * (1.0 - acts[li + 1] ** 2)
        return dz @ self.weights[-1].T

    def _vjp(self, X, t, U):
        _, acts = self.forward(X, t)
        delta = U
        for li in range(len(self.weights) - 1, -1, -1):
            delta = delta @ self.weights[li]
            if li > 0:
                delta = delta * (1.0 - acts[li] ** 2)
        return delta[:, : self.dim]

    def to_dict(self):
        return {
            "type": "mlp",
            "activation": self.activation,
            "layers": [
                {"shape": list(W.shape), "weight": W.reshape(-1).tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }


def field_from_dict(spec):
    """Rebuild a field from its JSON-ready dictionary."""
    kind = spec.get("type")
    if kind == "zero":
        return ZeroField(spec["dim"])
    if kind == "constant":
        return ConstantField(spec["c"])
    if kind == "linear":
        return LinearField(spec["A"], spec.get("c"))
    if kind == "affine1d":
        return Affine1DField(spec["mu"], spec["sigma"], spec.get("dim", 1))
    if kind == "gaussian_mixture":
        return GaussianMixtureField(spec["weights"], spec["means"], spec["chols"], spec.get("eps", MIXTURE_EPS))
    if kind == "stationary_gaussian":
        return StationaryGaussianField(spec["n"], spec["mean"], spec["spectrum_var"], spec.get("eps", MIXTURE_EPS))
    if kind == "mlp":
        Ws = [np.array(layer["weight"], dtype=float).reshape(layer["shape"]) for layer in spec["layers"]]
        bs = [np.array(layer["bias"], dtype=float) for layer in spec["layers"]]
        return NeuralMLPField(Ws, bs, spec.get("activation", "tanh"))
    raise ValueError(f"unknown field type {kind!r}")


class Lookahead:
    """k explicit Euler steps of the reference ODE from ``t`` to 1.

    Every intermediate state is kept so the tangent and adjoint chains reuse
    them. With ``strict=False`` non-finite rows are reported in ``finite``
    instead of raising.
    """

    def __init__(self, field, x, t, k=4, strict=True):
        X, self.single = _batch(x, field.dim)
        self.field = field
        t = float(t)
        self.k = int(k) if t < 1.0 else 0
        if self.k < 0 or (t < 1.0 and self.k < 1):
            raise ValueError("lookahead needs k >= 1")
        self.h = (1.0 - t) / self.k if self.k else 0.0
        self.times = [t + i * self.h for i in range(self.k)]
        states = [X]
        with np.errstate(over="ignore", invalid="ignore"):
            for ti in self.times:
                states.append(states[-1] + self.h * field._eval(states[-1], ti))
        self.states = states
        self.finite = np.all(np.isfinite(states[-1]), axis=1)
        if strict and not self.finite.all():
            raise LookaheadDiverged("non-finite state during lookahead")

    @property
    def terminal(self):
        y = self.states[-1]
        return y[0] if self.single else y

    def forward(self, v):
        """Tangent chain ``DΦ̂ · v``."""
        W, single = _batch(v, self.field.dim)
        W = np.broadcast_to(W, self.states[0].shape).copy()
        for xi, ti in zip(self.states[:-1], self.times):
            W = W + self.h * self.field._jvp(xi, ti, W)
        return W[0] if single else W

    def reverse(self, u):
        """Adjoint chain ``DΦ̂ᵀ · u``."""
        U, single = _batch(u, self.field.dim)
        U = np.broadcast_to(U, self.states[0].shape).copy()
        for xi, ti in zip(reversed(self.states[:-1]), reversed(self.times)):
            U = U + self.h * self.field._vjp(xi, ti, U)
        return U[0] if single else U


def lookahead_flow(field, x, t, k=4):
    """Estimate ``Φ_{t→1}(x)`` with k Euler steps; identity at ``t = 1``."""
    return Lookahead(field, x, t, k).terminal


def forward_sensitivity(field, x, t, k, v):
    return Lookahead(field, x, t, k).forward(v)


def reverse_sensitivity(field, x, t, k, u):
    return Lookahead(field, x, t, k).reverse(u)


def pullback_grad(field, constraint, x, t, k=4):
    """Exact gradient of ``H(lookahead_flow(x))`` by reverse accumulation."""
    la = Lookahead(field, x, t, k)
    y = la.terminal
    return la.reverse(constraint.vjp(y, constraint.residual(y)))
