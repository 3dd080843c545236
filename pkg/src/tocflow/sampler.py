"""Guided sampling loop on a uniform time grid and the seeded batch runner."""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import SampleDiverged
from .fields import Lookahead
from .guidance import GuidanceConfig, control_gradient, gn_approx_step, stretched_time, terminal_project
from .numcore import RngStream

DIVERGENCE_LIMIT = 1e8
GEOMEAN_FLOOR = 1e-300


class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: int = Field(200, ge=1)
    integrator: Literal["euler", "heun"] = "heun"
    scale_control_by_dt: bool = True
    guidance: GuidanceConfig = GuidanceConfig()
    n_samples: int = Field(1, ge=1)
    seed: int = 0
    chunk_size: int = Field(64, ge=1)


def _step_coefficient(cfg, t, dt, eps_s):
    """``c_n``; for γ ≥ 1 the control is off once ``t ≥ 1 − eps_s``, matching
    the truncation of the stretched time."""
    g = cfg.guidance
    if g.method != "gd" and g.gamma >= 1.0 and t >= 1.0 - eps_s:
        return 0.0
    c = g.eta if g.method == "gd" else 1.0 / float(g.schedule.lam(t))
    return c * dt if cfg.scale_control_by_dt else c


def integrate(field, constraint, cfg, X0):
    """Run the guided sampling loop for a batch of initial states.

    Returns ``(X1, diverged_step)``; rows that left the finite range carry
    NaN and the 1-based step index at which they diverged (-1 otherwise).
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    N = cfg.steps
    dt = 1.0 / N
    gcfg = cfg.guidance
    method = gcfg.method
    eps_s = gcfg.eps_s if gcfg.eps_s is not None else dt
    X = X0.copy()
    div_step = np.full(X.shape[0], -1)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            t = n * dt
            if method == "gn_approx":
                X = gn_approx_step(field, constraint, X0, X, t, dt, gcfg.k, gcfg.proj_budget, gcfg.proj_inner_cg)
            else:
                b = field._eval(X, t)
                if cfg.integrator == "heun":
                    b = 0.5 * (b + field._eval(X + dt * b, t + dt))
                step = dt * b
                if method in ("gd", "tocflow", "gn"):
                    s = stretched_time(gcfg.schedule, t, eps_s)
                    la = Lookahead(field, X, t, gcfg.k, strict=False)
                    g, _ = control_gradient(gcfg, field, constraint, X, t, s, lookahead=la)
                    step = step - _step_coefficient(cfg, t, dt, eps_s) * g
                X = X + step
            bad = ~np.all(np.isfinite(X) & (np.abs(X) <= DIVERGENCE_LIMIT), axis=1)
            fresh = bad & (div_step < 0)
            div_step[fresh] = n + 1
            if bad.any():
                X[bad] = 0.0
        if method == "terminal_projection":
            X = terminal_project(constraint, X, gcfg.proj_budget, gcfg.proj_inner_cg)
    X[div_step >= 0] = np.nan
    return X, div_step


def initial_state(seed, index, dim):
    return RngStream(seed, index).normal(dim)


def sample_one(field, constraint, cfg, rng):
    """One trajectory from ``x0 ~ N(0, I)`` drawn from ``rng``."""
    x0 = rng.normal(field.dim)
    X, div = integrate(field, constraint, cfg, x0[None, :])
    if div[0] >= 0:
        raise SampleDiverged(div[0])
    return X[0]


@dataclass
class RunReport:
    """Per-sample terminal costs, residual norms and timings."""

    costs: np.ndarray
    residual_norms: np.ndarray
    wallclock_ms: np.ndarray
    diverged_step: np.ndarray
    method: str = "vanilla"
    states: Optional[np.ndarray] = None
    extras: dict = dc_field(default_factory=dict)

    @property
    def n_samples(self):
        return int(self.costs.size)

    @property
    def diverged(self):
        return self.diverged_step >= 0

    def summary(self):
        return summarize_costs(self.costs, self.diverged_step)


def summarize_costs(costs, diverged_step=None):
    costs = np.asarray(costs, dtype=float)
    ok = np.isfinite(costs)
    if diverged_step is not None:
        ok &= np.asarray(diverged_step) < 0
    c = costs[ok]
    out = {"n_samples": int(costs.size), "divergences": int(costs.size - c.size)}
    if c.size:
        p5, p50, p95 = np.percentile(c, [5, 50, 95])
        out.update({
            "mean": float(np.mean(c)),
            "median": float(np.median(c)),
            "geomean": float(np.exp(np.mean(np.log(np.maximum(c, GEOMEAN_FLOOR))))),
            "p5": float(p5),
            "p50": float(p50),
            "p95": float(p95),
            "max": float(np.max(c)),
        })
    else:
        out.update({k: None for k in ("mean", "median", "geomean", "p5", "p50", "p95", "max")})
    return out


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("TOCFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def sample_batch(field, constraint, cfg, seed=None, workers=None, keep_states=False):
    """``cfg.n_samples`` trajectories; sample ``i`` starts from
    ``RngStream(seed, i)``. Chunks have a fixed size, so results do not depend
    on the number of workers."""
    seed = cfg.seed if seed is None else int(seed)
    n = cfg.n_samples
    X0 = np.stack([initial_state(seed, i, field.dim) for i in range(n)])
    bounds = [(a, min(a + cfg.chunk_size, n)) for a in range(0, n, cfg.chunk_size)]

    def run(bound):
        a, b = bound
        t0 = time.perf_counter()
        X1, div = integrate(field, constraint, cfg, X0[a:b])
        ms = (time.perf_counter() - t0) * 1e3 / (b - a)
        return X1, div, ms

    nw = min(worker_count(workers), len(bounds))
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bd) for bd in bounds]

    X1 = np.vstack([p[0] for p in parts])
    div = np.concatenate([p[1] for p in parts])
    ms = np.concatenate([np.full(b - a, p[2]) for p, (a, b) in zip(parts, bounds)])
    costs = np.full(n, np.nan)
    norms = np.full(n, np.nan)
    ok = div < 0
    if ok.any():
        costs[ok] = constraint.terminal_cost(X1[ok])
        norms[ok] = constraint.residual_norm(X1[ok])
    return RunReport(costs, norms, ms, div, cfg.guidance.method, X1 if keep_states else None)
