"""Closed-form machinery for the 1-D linear-quadratic Gaussian model.

Reference flow from N(0, 1) to N(mu, sigma²), terminal cost H(x) = ½x²
(constraint h(x) = x) and control weight λ_t. The optimal feedback is linear,
so everything reduces to scalar quadratures and moment ODEs.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .guidance import WeightSchedule, stretched_time
from .numcore import DEFAULT_QUAD_PANELS, simpson_quad

DEFAULT_EPS_S = 0.005
BOUND_GRID = 4096


@dataclass(frozen=True)
class Gaussian1DModel:
    mu: float = 2.0
    sigma: float = 1.0
    schedule: WeightSchedule = WeightSchedule()
    eps_s: float = DEFAULT_EPS_S
    panels: int = DEFAULT_QUAD_PANELS

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def constant(cls, lam, mu=2.0, sigma=1.0, **kw):
        return cls(mu, sigma, WeightSchedule(lambda0=lam, gamma=0.0), **kw)

    def v2(self, t):
        t = np.asarray(t, dtype=float)
        return (1 - t) ** 2 + t**2 * self.sigma**2

    def v(self, t):
        return np.sqrt(self.v2(t))

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        return (t * self.sigma**2 - (1 - t)) / self.v2(t)

    def beta(self, t):
        return self.mu * (1 - np.asarray(t, dtype=float) * self.alpha(t))

    def lam(self, t):
        return self.schedule.lam(t)

    def s(self, t):
        return stretched_time(self.schedule, np.minimum(t, 1.0), self.eps_s)


@dataclass(frozen=True)
class OracleMoments:
    mean: float
    std: float
    scheme: str


def weighted_integral(m, g, a=0.0, b=1.0):
    """``∫_a^b g(t) / λ_t dt`` with a change of variables that removes the
    endpoint singularity of ``(1−t)^{−γ}``; for γ ≥ 1 the upper limit is
    truncated at ``1 − eps_s``."""
    lam0, gam, n = m.schedule.lambda0, m.schedule.gamma, m.panels
    if gam == 0.0:
        return simpson_quad(lambda t: g(t) / lam0, a, b, n)
    if gam < 1.0:
        p = 1.0 / (1.0 - gam)
        lo, hi = (1 - b) ** (1 - gam), (1 - a) ** (1 - gam)
        return simpson_quad(lambda u: g(1.0 - u**p), lo, hi, n) * p / lam0
    b = min(b, 1.0 - m.eps_s)
    if a >= b:
        return 0.0
    ta, tb = -np.log1p(-a), -np.log1p(-b)
    return simpson_quad(lambda tau: g(1.0 - np.exp(-tau)) * np.exp((gam - 1.0) * tau), ta, tb, n) / lam0


def gamma_lambda(m):
    """``σ² ∫₀¹ dt / (λ_t v(t)²)``."""
    return m.sigma**2 * weighted_integral(m, lambda t: 1.0 / m.v2(t))


def eta_lambda(m):
    """``∫₀¹ σ² / (λ_t (v(t)² + σ² s(t))) dt``."""
    return weighted_integral(m, lambda t: m.sigma**2 / (m.v2(t) + m.sigma**2 * m.s(t)))


def exact_moments(m):
    g = gamma_lambda(m)
    return OracleMoments(m.mu / (1 + g), m.sigma / (1 + g), "exact")


def scheme_moments(m, scheme):
    if scheme == "gd":
        rate = gamma_lambda(m)
    elif scheme in ("tocflow", "gn"):
        rate = eta_lambda(m)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    f = np.exp(-rate)
    return OracleMoments(m.mu * f, m.sigma * f, scheme)


def riccati_P(m, t):
    """``P(t) = (v(t)² (1/σ² + ∫_t^1 (λ_s v_s²)⁻¹ ds))⁻¹``; ``P(1) = 1``."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    tail = np.array([weighted_integral(m, lambda s: 1.0 / m.v2(s), ti, 1.0) if ti < 1 else 0.0 for ti in ts])
    P = 1.0 / (m.v2(ts) * (1.0 / m.sigma**2 + tail))
    return P if np.ndim(t) else float(P[0])


def riccati_r(m, t):
    """``r(t) = −μ (v(t)/σ − t)``; ``r(1) = 0``."""
    t = np.asarray(t, dtype=float)
    return -m.mu * (m.v(t) / m.sigma - t)


def riccati_Q(m, t):
    return -riccati_P(m, t) * riccati_r(m, t)


def riccati_feedback(m, x, t):
    """Optimal control ``a*(x, t) = −λ_t⁻¹ (P(t) x + Q(t))``."""
    return -(riccati_P(m, t) * np.asarray(x, dtype=float) + riccati_Q(m, t)) / m.lam(t)


def _inv_lam(m, t):
    """λ_t⁻¹ with the control switched off where the schedule is truncated."""
    t = np.asarray(t, dtype=float)
    if m.schedule.gamma == 0.0:
        return np.full_like(t, 1.0 / m.schedule.lambda0)
    cut = t >= 1.0 - m.eps_s if m.schedule.gamma >= 1.0 else t >= 1.0
    lam = m.lam(np.where(cut, 0.0, t))
    return np.where(cut, 0.0, 1.0 / lam)


def gain_gd(m, t):
    """``κ_GD(t) = σ² / (λ_t v(t)²)``."""
    return m.sigma**2 * _inv_lam(m, t) / m.v2(t)


def gain_toc(m, t):
    """``κ_TOC(t) = σ² / (λ_t (v(t)² + σ² s(t)))``."""
    return m.sigma**2 * _inv_lam(m, t) / (m.v2(t) + m.sigma**2 * m.s(t))


def gain_riccati(m, t):
    return riccati_P(m, t) * _inv_lam(m, t)


def moment_simulate(m, gain, bias=None, N=4000):
    """Heun integration of the closed-loop mean and variance

    ``ṁ = (α − κ) m + β − bias``, ``V̇ = 2 (α − κ) V`` from ``(0, 1)``.

    ``bias`` defaults to ``κ(t) μ (v(t)/σ − t)``, which is the offset shared
    by the Riccati, GD and TOCFlow feedbacks. Returns ``(mean, std)``.
    """
    if N < 2:
        raise ValueError("moment_simulate needs N >= 2")
    if bias is None:
        def bias(t):
            return gain(t) * m.mu * (m.v(t) / m.sigma - t)

    def rhs(t, y):
        k = gain(t)
        a = m.alpha(t)
        return np.array([(a - k) * y[0] + m.beta(t) - bias(t), 2.0 * (a - k) * y[1]])

    dt = 1.0 / N
    y = np.array([0.0, 1.0])
    for i in range(N):
        t = i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt, y + dt * k1)
        y = y + 0.5 * dt * (k1 + k2)
    return float(y[0]), float(np.sqrt(y[1]))


def _rk4_on_fine(rhs, y0, n_steps):
    """Classical RK4 on ``n_steps`` uniform steps; ``rhs(j, y)`` is evaluated
    at fine-grid index ``j`` (spacing half a step)."""
    h = 1.0 / n_steps
    ys = [np.array(y0, dtype=float)]
    for i in range(n_steps):
        y = ys[-1]
        k1 = rhs(2 * i, y)
        k2 = rhs(2 * i + 1, y + h / 2 * k1)
        k3 = rhs(2 * i + 1, y + h / 2 * k2)
        k4 = rhs(2 * i + 2, y + h * k3)
        ys.append(y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(ys)


def energy_equivalence_check(m, N=2000, control=True):
    """Control energy of the optimal feedback computed two ways.

    Eulerian: ``∫ (λ_t/2) E[a*(X_t, t)²] dt`` from the closed-loop moments of
    ``X_t``. Co-moving: ``∫ (λ_t/2) v(t)² E[w(Z_t, t)²] dt`` where
    ``Z_t = Φ_{0→t}⁻¹(X_t)`` obeys the driftless ODE ``Ż = w = a*/v``,
    integrated on its own. Returns ``(eulerian, comoving)``.
    """
    if N % 2:
        N += 1
    fine = np.linspace(0.0, 1.0, 2 * N + 1)
    P = riccati_P(m, fine) if control else np.zeros_like(fine)
    Q = -P * riccati_r(m, fine)
    il = _inv_lam(m, fine)
    al, be, v = m.alpha(fine), m.beta(fine), m.v(fine)

    def x_rhs(j, y):
        return np.array([al[j] * y[0] + be[j] - il[j] * (P[j] * y[0] + Q[j]),
                         2 * (al[j] - il[j] * P[j]) * y[1]])

    def z_rhs(j, y):
        return np.array([-il[j] * (P[j] * (v[j] * y[0] + m.mu * fine[j]) + Q[j]) / v[j],
                         -2 * il[j] * P[j] * y[1]])

    X = _rk4_on_fine(x_rhs, [0.0, 1.0], N)
    Z = _rk4_on_fine(z_rhs, [0.0, 1.0], N)
    grid = fine[::2]
    Pg, Qg, ilg, vg = P[::2], Q[::2], il[::2], v[::2]
    mx, Vx = X[:, 0], X[:, 1]
    euler = 0.5 * ilg * (Pg**2 * (mx**2 + Vx) + 2 * Pg * Qg * mx + Qg**2)
    A = Pg * vg
    c = Pg * m.mu * grid + Qg
    mz, Vz = Z[:, 0], Z[:, 1]
    comov = 0.5 * ilg * (A**2 * (mz**2 + Vz) + 2 * A * c * mz + c**2)
    return float(integrate.simpson(euler, x=grid)), float(integrate.simpson(comov, x=grid))


def w2_gaussian(mu1, s1, mu2, s2):
    """2-Wasserstein distance between 1-D Gaussians."""
    return float(np.sqrt((mu1 - mu2) ** 2 + (s1 - s2) ** 2))


def wasserstein_sandwich(m, N=2000):
    """Check the optimal cost against the two-sided W2 bounds.

    The target law ν is the exact optimal terminal law, ρ̄₁ = N(μ, σ²), and
    ``c₋, c₊`` are the min and max of v(t) on a 4096-point grid.
    """
    grid = np.linspace(0.0, 1.0, BOUND_GRID)
    vs = m.v(grid)
    c_lo, c_hi = float(vs.min()), float(vs.max())
    lams = m.lam(grid[:-1])
    lam_lo, lam_hi = float(lams.min()), float(lams.max())
    ex = exact_moments(m)
    energy, _ = energy_equivalence_check(m, N)
    h_nu = 0.5 * (ex.mean**2 + ex.std**2)
    w2 = w2_gaussian(m.mu, m.sigma, ex.mean, ex.std)
    lower = h_nu + c_lo**2 * lam_lo / (2 * c_hi**2) * w2**2
    upper = h_nu + c_hi**2 * lam_hi / (2 * c_lo**2) * w2**2
    achieved = h_nu + energy
    return {"lower": lower, "achieved": achieved, "upper": upper, "energy": energy,
            "terminal_cost": h_nu, "w2": w2, "c_minus": c_lo, "c_plus": c_hi,
            "ok": bool(lower <= achieved <= upper)}


def fig1_curve(sigma=1.0, mu=2.0, lambdas=None):
    """Rows ``(λ, σ̃_exact, σ̃_GD, σ̃_TOC)`` for constant schedules λ."""
    if lambdas is None:
        lambdas = np.logspace(-2, 2, 41)
    rows = []
    for lam in np.asarray(lambdas, dtype=float):
        if lam <= 0:
            raise ValueError("lambda grid must be positive")
        m = Gaussian1DModel.constant(lam, mu, sigma)
        rows.append((float(lam), exact_moments(m).std, scheme_moments(m, "gd").std, scheme_moments(m, "tocflow").std))
    return np.array(rows)
