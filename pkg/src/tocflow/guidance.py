"""Weight schedules, stretched time and the guidance solvers: gradient
descent, TOCFlow damping, matrix-free Gauss-Newton, the approximated-GN
interpolation baseline and terminal projection.

Solvers act on a single state or a batch of states sharing the time ``t``.
"""
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .fields import Lookahead
from .numcore import cg_solve

METHODS = ("vanilla", "gd", "tocflow", "gn", "gn_approx", "terminal_projection")


class WeightSchedule(BaseModel):
    """``λ_t = λ₀ (1 − t)^γ``; ``kind="constant"`` forces ``γ = 0``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda0: float = Field(1.0, gt=0)
    gamma: float = Field(0.0, ge=0)
    kind: Literal["power-law", "constant"] = "power-law"

    @model_validator(mode="after")
    def _constant_means_flat(self):
        if self.kind == "constant" and self.gamma != 0:
            raise ValueError("a constant schedule has gamma = 0")
        return self

    def lam(self, t):
        t = np.asarray(t, dtype=float)
        return self.lambda0 * (1.0 - t) ** self.gamma


class GuidanceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal["vanilla", "gd", "tocflow", "gn", "gn_approx", "terminal_projection"] = "vanilla"
    k: int = Field(4, ge=1)
    eta: float = Field(0.1, gt=0)
    lambda0: float = Field(1.0, gt=0)
    gamma: float = Field(0.0, ge=0)
    cg_tol: float = Field(1e-8, gt=0)
    cg_max: Optional[int] = Field(None, ge=1)
    proj_budget: int = Field(1000, ge=1)
    proj_inner_cg: int = Field(20, ge=1)
    eps_s: Optional[float] = Field(None, gt=0)

    @property
    def schedule(self):
        return WeightSchedule(lambda0=self.lambda0, gamma=self.gamma)


def stretched_time(sch, t, eps_s):
    """``s(t) = ∫_t^1 λ_u⁻¹ du``, truncated at ``1 − eps_s`` when γ ≥ 1."""
    t = np.asarray(t, dtype=float)
    lam0, g = sch.lambda0, sch.gamma
    rem = np.clip(1.0 - t, 0.0, None)
    if g < 1.0:
        out = rem ** (1.0 - g) / (lam0 * (1.0 - g))
    else:
        upper = 1.0 - eps_s
        safe = np.maximum(rem, eps_s)
        if g == 1.0:
            out = np.log(safe / eps_s) / lam0
        else:
            out = (eps_s ** (1.0 - g) - safe ** (1.0 - g)) / (lam0 * (g - 1.0))
        out = np.where(t >= upper, 0.0, out)
    return float(out) if out.ndim == 0 else out


def gd_solve(field, constraint, x, t, k=4):
    """Pullback gradient ``∇_x (H ∘ Φ̂_{t→1})(x)``."""
    la = Lookahead(field, x, t, k)
    y = la.terminal
    return la.reverse(constraint.vjp(y, constraint.residual(y)))


def _toc_from_lookahead(la, constraint, s):
    y = la.terminal
    h = np.atleast_2d(constraint.residual(y))
    g = np.atleast_2d(la.reverse(constraint.vjp(y, h if not la.single else h[0])))
    r2 = np.sum(h * h, axis=1)
    g2 = np.sum(g * g, axis=1)
    pos = r2 > 0
    tau = np.where(pos, 1.0 / (1.0 + s * g2 / np.where(pos, r2, 1.0)), 0.0)
    out = tau[:, None] * g
    return (out[0] if la.single else out), tau


def toc_solve(field, constraint, x, t, s, k=4, return_tau=False):
    """TOCFlow control gradient ``τ* g`` with ``τ* = 1 / (1 + s‖g‖²/‖h‖²)``.

    Rows whose lookahead residual is exactly zero get a zero control.
    """
    out, tau = _toc_from_lookahead(Lookahead(field, x, t, k), constraint, s)
    if return_tau:
        return out, (tau[0] if np.ndim(x) == 1 else tau)
    return out


def gn_solve(field, constraint, x, t, s, k=4, cg_tol=1e-8, cg_max=None, return_info=False):
    """Matrix-free Gauss-Newton control gradient ``Mᵀα`` where
    ``(I + s M Mᵀ) α = h(ŷ)`` and ``M = J_h(ŷ) DΦ̂_{t→1}(x)``."""
    la = Lookahead(field, x, t, k)
    return _gn_from_lookahead(la, constraint, s, cg_tol, cg_max, return_info)


def _gn_from_lookahead(la, constraint, s, cg_tol=1e-8, cg_max=None, return_info=False):
    y = np.atleast_2d(la.terminal)
    single = la.single
    h = constraint.residual(y)
    r = h.shape[1]
    if cg_max is None:
        cg_max = min(r, 100)

    def mt(u):
        return la.reverse(constraint.vjp(y, np.atleast_2d(u)))

    def apply(a):
        a2 = np.atleast_2d(a)
        return a2 + s * constraint.jvp(y, la.forward(mt(a2)))

    res = cg_solve(apply, h, tol=cg_tol, max_iter=cg_max, on_breakdown="flag")
    out = mt(res.x)
    out = out[0] if single else out
    if return_info:
        return out, res
    return out


def terminal_project(constraint, x1, budget=1000, inner_cg=20, damping=1e-6, tol=1e-12):
    """Damped Gauss-Newton projection onto ``{h = 0}``.

    Each iteration solves ``(J_h J_hᵀ + μI) α = h(z)`` with at most
    ``inner_cg`` CG steps and sets ``z ← z − J_hᵀ α``; a row stops once
    ``‖h(z)‖ ≤ tol`` or the budget is spent.
    """
    Z = np.array(x1, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    for _ in range(int(budget)):
        H = constraint.residual(Z)
        active = np.linalg.norm(H, axis=1) > tol
        if not active.any():
            break
        Za, Ha = Z[active], H[active]

        def apply(a, Za=Za):
            return constraint.jvp(Za, constraint.vjp(Za, a)) + damping * a

        res = cg_solve(apply, Ha, tol=1e-14, max_iter=inner_cg, on_breakdown="flag")
        step = constraint.vjp(Za, res.x)
        if not np.all(np.isfinite(step)):
            break
        Z[active] = Za - step
    return Z[0] if single else Z


def gn_approx_step(field, constraint, x0, xt, t, dt, k=4, budget=1000, inner_cg=20, damping=1e-6):
    """Pull the projected lookahead back along the straight path from ``x0``:
    ``(1 − (t+dt)) x0 + (t+dt) project(Φ̂_{t→1}(xt))``."""
    x1 = terminal_project(constraint, Lookahead(field, xt, t, k).terminal, budget, inner_cg, damping)
    tn = t + dt
    return (1.0 - tn) * np.asarray(x0, dtype=float) + tn * x1


def control_gradient(cfg, field, constraint, X, t, s, lookahead=None):
    """Dispatch the configured solver on a batch; returns ``(g, diagnostics)``."""
    la = lookahead if lookahead is not None else Lookahead(field, X, t, cfg.k)
    if cfg.method == "gd":
        y = la.terminal
        return la.reverse(constraint.vjp(y, constraint.residual(y))), {}
    if cfg.method == "tocflow":
        g, tau = _toc_from_lookahead(la, constraint, s)
        return g, {"tau": tau}
    if cfg.method == "gn":
        g, res = _gn_from_lookahead(la, constraint, s, cfg.cg_tol, cfg.cg_max, return_info=True)
        return g, {"cg_converged": res.converged, "cg_breakdown": res.breakdown}
    raise ValueError(f"method {cfg.method!r} has no per-step control gradient")
