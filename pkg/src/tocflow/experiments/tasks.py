"""Task configurations and end-to-end drivers.

Every driver returns an :class:`ExperimentResult`; the CLI turns it into
``report.csv``, ``summary.json`` and ``manifest.json``.
"""
import logging
import time
from dataclasses import dataclass, field as dc_field
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .. import oracle
from ..constraints import (CoordinateEquality, CorridorConstraint, DarcyConstraint, LinearConstraint,
                           NullConstraint, SpectrumConstraint)
from ..errors import ConfigError, ExperimentError
from ..fields import (Affine1DField, ConstantField, GaussianMixtureField, LinearField, Lookahead, NeuralMLPField,
                      StationaryGaussianField, ZeroField)
from ..fm_train import FMTrainConfig, gaussian_sampler, probe_rms, train
from ..guidance import METHODS, GuidanceConfig, WeightSchedule, gn_solve, stretched_time, toc_solve
from ..numcore import RngStream, adjoint_gap, grad_check
from ..sampler import SamplerConfig, sample_batch
from .artifacts import read_array
from .generators import (DarcyGenSpec, GPTrajectorySpec, SpectrumGenSpec, fit_gaussian_reference,
                         fit_stationary_gaussian, gen_corridors, gen_darcy_pairs, gen_gp_mixture_field,
                         gen_spectrum_field, kink_metric)

log = logging.getLogger(__name__)

CORRIDOR_STREAM = 99
DARCY_STREAM = 1
SPECTRUM_STREAM = 2


@dataclass
class ExperimentResult:
    """Per-method sample reports plus task-level numbers.

    ``table`` is ``(header, rows)`` for tasks without per-sample reports.
    ``columns`` holds extra per-sample columns keyed by method.
    """

    name: str
    reports: Dict[str, object] = dc_field(default_factory=dict)
    columns: Dict[str, Dict[str, np.ndarray]] = dc_field(default_factory=dict)
    summary: dict = dc_field(default_factory=dict)
    checks: Dict[str, bool] = dc_field(default_factory=dict)
    table: Optional[Tuple[List[str], list]] = None
    arrays: Dict[str, Tuple[np.ndarray, dict]] = dc_field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class _SamplingTask(_Strict):
    """Shared sampler settings and per-method guidance overrides.

    ``guidance`` entries are merged key-by-key onto the task defaults, so a
    config may override a single hyperparameter of a single method.
    """

    methods: Tuple[str, ...] = ("vanilla", "gd", "tocflow", "terminal_projection")
    steps: int = Field(200, ge=1)
    integrator: str = "heun"
    scale_control_by_dt: bool = True
    n_samples: int = Field(64, ge=1)
    seed: int = 0
    chunk_size: int = Field(64, ge=1)
    keep_states: bool = False
    guidance: Dict[str, GuidanceConfig] = {}

    DEFAULT_GUIDANCE: ClassVar[dict] = {}

    @model_validator(mode="before")
    @classmethod
    def _merge_guidance(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        given = data.get("guidance") or {}
        if not isinstance(given, dict):
            raise ValueError("guidance must map method names to settings")
        merged = {}
        for name in set(cls.DEFAULT_GUIDANCE) | set(given):
            entry = dict(cls.DEFAULT_GUIDANCE.get(name, {}))
            over = given.get(name, {})
            if isinstance(over, GuidanceConfig):
                over = over.model_dump()
            entry.update(over)
            entry.setdefault("method", name)
            if entry["method"] != name:
                raise ValueError(f"guidance entry {name!r} has method {entry['method']!r}")
            merged[name] = entry
        data["guidance"] = merged
        return data

    @model_validator(mode="after")
    def _known_methods(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        return self

    def sampler_config(self, method):
        g = self.guidance.get(method, GuidanceConfig(method=method))
        return SamplerConfig(steps=self.steps, integrator=self.integrator,
                             scale_control_by_dt=self.scale_control_by_dt, guidance=g,
                             n_samples=self.n_samples, seed=self.seed, chunk_size=self.chunk_size)


class TrajectoryConfig(_SamplingTask):
    spec: GPTrajectorySpec = GPTrajectorySpec()
    corridor_seed: int = 0
    n_samples: int = Field(256, ge=1)
    scale_control_by_dt: bool = False
    DEFAULT_GUIDANCE: ClassVar[dict] = {
        "gd": {"eta": 10.0, "k": 4},
        "tocflow": {"lambda0": 1.0, "k": 4},
        "gn": {"lambda0": 1.0, "k": 4},
    }


class DarcyConfig(_SamplingTask):
    spec: DarcyGenSpec = DarcyGenSpec()
    n_train: int = Field(1024, ge=2)
    data_seed: int = 0
    dataset: Optional[str] = None
    steps: int = Field(1000, ge=1)
    n_samples: int = Field(128, ge=1)
    DEFAULT_GUIDANCE: ClassVar[dict] = {
        "gd": {"eta": 1e-4, "k": 4},
        "tocflow": {"lambda0": 1.0, "k": 4},
        "gn": {"lambda0": 1.0, "k": 4},
    }


class SpectrumConfig(_SamplingTask):
    spec: SpectrumGenSpec = SpectrumGenSpec()
    band: Tuple[int, int] = (2, 9)
    n_train: int = Field(256, ge=2)
    data_seed: int = 0
    dataset: Optional[str] = None
    steps: int = Field(1000, ge=1)
    integrator: str = "euler"
    DEFAULT_GUIDANCE: ClassVar[dict] = {
        "gd": {"eta": 1e3, "k": 4},
        "tocflow": {"lambda0": 1e-5, "k": 4},
        "gn": {"lambda0": 1e-5, "k": 4},
    }


class GaussianConfig(_Strict):
    mu: float = 2.0
    sigma: float = Field(1.0, gt=0)
    lambda0: float = Field(1.0, gt=0)
    gamma: float = Field(0.0, ge=0)
    eps_s: float = Field(oracle.DEFAULT_EPS_S, gt=0)
    moment_steps: int = Field(4000, ge=2)
    mc_samples: int = Field(0, ge=0)
    mc_steps: int = Field(2000, ge=1)
    mc_k: int = Field(64, ge=1)
    seed: int = 0
    tolerance: float = Field(1e-3, gt=0)

    def model(self):
        return oracle.Gaussian1DModel(self.mu, self.sigma, WeightSchedule(lambda0=self.lambda0, gamma=self.gamma),
                                      self.eps_s)


class Fig1Config(_Strict):
    mu: float = 2.0
    sigma: float = Field(1.0, gt=0)
    log10_min: float = -2.0
    log10_max: float = 2.0
    num: int = Field(41, ge=2)


class ProximalConfig(_Strict):
    cases: int = Field(20, ge=1)
    seed: int = 0
    k: int = Field(4, ge=1)
    t: float = Field(0.3, ge=0, lt=1)
    lambda0: float = Field(0.5, gt=0)
    constraint_rows: int = Field(2, ge=1, le=2)
    tolerance: float = Field(1e-6, gt=0)


class FMTaskConfig(_Strict):
    mu: float = 2.0
    sigma: float = Field(1.0, gt=0)
    train: FMTrainConfig = FMTrainConfig(hidden=(64, 64), lr=3e-3, batch_size=256, iterations=5000)
    rms_tolerance: float = Field(0.1, gt=0)


class GradcheckConfig(_Strict):
    probes: int = Field(50, ge=1)
    seed: int = 0
    adjoint_tol: float = Field(1e-10, gt=0)
    grad_tol: float = Field(1e-5, gt=0)


class GenDataConfig(_Strict):
    darcy: DarcyGenSpec = DarcyGenSpec()
    darcy_count: int = Field(1024, ge=0)
    spectrum: SpectrumGenSpec = SpectrumGenSpec()
    spectrum_count: int = Field(256, ge=0)
    seed: int = 0


def _run_methods(cfg, field, constraint, workers=None, keep_states=False):
    reports = {}
    for m in cfg.methods:
        t0 = time.perf_counter()
        reports[m] = sample_batch(field, constraint, cfg.sampler_config(m), workers=workers,
                                  keep_states=keep_states or cfg.keep_states)
        log.info("%s: %d samples in %.1f s", m, cfg.n_samples, time.perf_counter() - t0)
    return reports


def _method_summary(reports):
    return {m: r.summary() for m, r in reports.items()}


def _median(reports, m, key="costs"):
    if m not in reports:
        return None
    v = getattr(reports[m], key)
    v = v[np.isfinite(v)]
    return float(np.median(v)) if v.size else float("nan")


def run_trajectory(cfg=TrajectoryConfig(), workers=None):
    field = gen_gp_mixture_field(cfg.spec)
    constraint = gen_corridors(cfg.spec, RngStream(cfg.corridor_seed, CORRIDOR_STREAM))
    reports = _run_methods(cfg, field, constraint, workers, keep_states=True)
    res = ExperimentResult("trajectory", reports)
    kinks = {}
    for m, r in reports.items():
        k = np.full(r.n_samples, np.nan)
        ok = ~r.diverged
        if ok.any():
            k[ok] = kink_metric(r.states[ok])
        kinks[m] = k
        res.columns[m] = {"kink": k}
        if not cfg.keep_states:
            r.states = None
    summ = _method_summary(reports)
    for m, k in kinks.items():
        summ[m]["median_kink"] = float(np.nanmedian(k)) if np.isfinite(k).any() else None
    res.summary = {"methods": summ, "corridors": constraint.to_dict()}
    med = {m: _median(reports, m) for m in reports}
    if "vanilla" in med:
        res.checks["vanilla_median_positive"] = med["vanilla"] > 0
    if "tocflow" in med:
        res.checks["tocflow_median_le_1e-8"] = med["tocflow"] <= 1e-8
        if "gd" in med:
            res.checks["tocflow_median_le_gd"] = med["tocflow"] <= med["gd"]
    if "terminal_projection" in med:
        res.checks["projection_median_le_1e-12"] = med["terminal_projection"] <= 1e-12
        if "tocflow" in med:
            res.checks["projection_kink_gt_tocflow"] = bool(
                np.nanmedian(kinks["terminal_projection"]) > np.nanmedian(kinks["tocflow"]))
    return res


def _load_or_generate(dataset, generate):
    if dataset is not None:
        data, meta = read_array(dataset)
        return data, {"dataset": dataset, "dataset_meta": meta}
    return generate(), {"dataset": None}


def darcy_generator_rms(constraint, pairs):
    return float(np.sqrt(np.mean(constraint.residual(pairs) ** 2)))


def run_darcy(cfg=DarcyConfig(), workers=None):
    constraint = DarcyConstraint(cfg.spec.n, cfg.spec.r_src, cfg.spec.w)
    pairs, info = _load_or_generate(
        cfg.dataset, lambda: gen_darcy_pairs(cfg.spec, RngStream(cfg.data_seed, DARCY_STREAM), cfg.n_train))
    if pairs.ndim != 2 or pairs.shape[1] != constraint.dim:
        raise ConfigError(f"darcy dataset has shape {pairs.shape}, expected (count, {constraint.dim})")
    field = fit_gaussian_reference(pairs)
    reports = _run_methods(cfg, field, constraint, workers)
    res = ExperimentResult("darcy", reports)
    rms = darcy_generator_rms(constraint, pairs)
    res.summary = {"methods": _method_summary(reports), "generator_rms_residual": rms,
                   "train_pairs": int(pairs.shape[0]), **info}
    if "vanilla" in reports and "tocflow" in reports:
        mv = reports["vanilla"].summary()["mean"]
        mt = reports["tocflow"].summary()["mean"]
        res.summary["tocflow_over_vanilla_mean"] = mt / mv if mv else None
        res.checks["tocflow_mean_le_0.2_vanilla"] = mt is not None and mv is not None and mt <= 0.2 * mv
    return res


def run_spectrum(cfg=SpectrumConfig(), workers=None):
    n = cfg.spec.n
    constraint = SpectrumConstraint(n, cfg.band, cfg.spec.beta)
    fields, info = _load_or_generate(
        cfg.dataset, lambda: gen_spectrum_field(cfg.spec, RngStream(cfg.data_seed, SPECTRUM_STREAM), cfg.n_train))
    if fields.ndim != 2 or fields.shape[1] != n * n:
        raise ConfigError(f"spectrum dataset has shape {fields.shape}, expected (count, {n * n})")
    field = fit_stationary_gaussian(fields, n)
    reports = _run_methods(cfg, field, constraint, workers)
    res = ExperimentResult("spectrum", reports)
    probe = RngStream(cfg.data_seed, SPECTRUM_STREAM + 1)
    r53 = float(constraint.residual(gen_spectrum_field(SpectrumGenSpec(n=n, beta=5 / 3), probe))[0])
    r2 = float(constraint.residual(gen_spectrum_field(SpectrumGenSpec(n=n, beta=2.0), probe))[0])
    ks = np.arange(cfg.band[0], cfg.band[1] + 1)
    r2_expected = float(np.var(-(2.0 - cfg.spec.beta) * np.log(ks)))
    summ = _method_summary(reports)
    for m, r in reports.items():
        summ[m]["median_residual"] = _median(reports, m, "residual_norms")
    res.summary = {"methods": summ, "constructed_residual": r53, "steeper_residual": r2,
                   "steeper_residual_expected": r2_expected, "train_fields": int(fields.shape[0]), **info}
    res.checks["constructed_residual_le_1e-3"] = r53 <= 1e-3
    res.checks["steeper_residual_within_10pct"] = abs(r2 - r2_expected) <= 0.1 * r2_expected
    if "vanilla" in reports and "tocflow" in reports:
        mv = _median(reports, "vanilla", "residual_norms")
        mt = _median(reports, "tocflow", "residual_norms")
        res.summary["tocflow_over_vanilla_median_residual"] = mt / mv if mv else None
        res.checks["tocflow_median_residual_le_0.1_vanilla"] = mt <= 0.1 * mv
    return res


def gaussian_mc(cfg, method):
    """Terminal sample mean and std of guided sampling on the affine field
    with constraint ``h(x) = x`` in continuous mode. GD uses ``η = 1/λ₀``,
    which matches the GD oracle only for constant schedules."""
    sc = SamplerConfig(steps=cfg.mc_steps, integrator="heun", scale_control_by_dt=True,
                       guidance=GuidanceConfig(method=method, k=cfg.mc_k, eta=1.0 / cfg.lambda0,
                                               lambda0=cfg.lambda0, gamma=cfg.gamma, eps_s=cfg.eps_s),
                       n_samples=cfg.mc_samples, seed=cfg.seed, chunk_size=cfg.mc_samples)
    r = sample_batch(Affine1DField(cfg.mu, cfg.sigma), CoordinateEquality([0], [0.0], 1), sc, keep_states=True)
    x = r.states[:, 0]
    return float(x.mean()), float(x.std(ddof=1))


def run_gaussian(cfg=GaussianConfig()):
    """Closed forms against moment ODEs and, optionally, Monte-Carlo sampling."""
    m = cfg.model()
    ex = oracle.exact_moments(m)
    gd = oracle.scheme_moments(m, "gd")
    toc = oracle.scheme_moments(m, "tocflow")
    sims = {
        "exact": oracle.moment_simulate(m, lambda t: oracle.gain_riccati(m, t), N=cfg.moment_steps),
        "gd": oracle.moment_simulate(m, lambda t: oracle.gain_gd(m, t), N=cfg.moment_steps),
        "tocflow": oracle.moment_simulate(m, lambda t: oracle.gain_toc(m, t), N=cfg.moment_steps),
    }
    closed = {"exact": ex, "gd": gd, "tocflow": toc}
    rows = []
    deltas = []
    for name, om in closed.items():
        sm, ss = sims[name]
        for q, ref, got in (("mean", om.mean, sm), ("std", om.std, ss)):
            d = abs(got - ref) / max(abs(ref), 1e-300)
            deltas.append(d)
            rows.append([name, q, "moment_ode", ref, got, d])
    res = ExperimentResult("gaussian")
    res.checks["moment_ode_within_tol"] = max(deltas) <= cfg.tolerance
    mc = {}
    if cfg.mc_samples > 1:
        n = cfg.mc_samples
        for name in ("gd", "tocflow"):
            mean, std = gaussian_mc(cfg, name)
            om = closed[name]
            se_mean, se_std = std / np.sqrt(n), std / np.sqrt(2.0 * (n - 1))
            z_mean, z_std = abs(mean - om.mean) / se_mean, abs(std - om.std) / se_std
            rows.append([name, "mean", "monte_carlo", om.mean, mean, z_mean])
            rows.append([name, "std", "monte_carlo", om.std, std, z_std])
            mc[name] = {"mean": mean, "std": std, "z_mean": z_mean, "z_std": z_std}
            res.checks[f"mc_{name}_within_3se"] = z_mean <= 3.0 and z_std <= 3.0
    e_eul, e_com = oracle.energy_equivalence_check(m)
    sandwich = oracle.wasserstein_sandwich(m)
    res.table = (["scheme", "quantity", "source", "oracle", "simulated", "delta"], rows)
    res.summary = {
        "gamma_lambda": oracle.gamma_lambda(m), "eta_lambda": oracle.eta_lambda(m),
        "exact": vars(ex), "gd": vars(gd), "tocflow": vars(toc),
        "max_relative_delta": float(max(deltas)), "monte_carlo": mc,
        "energy_eulerian": e_eul, "energy_comoving": e_com,
        "energy_relative_gap": abs(e_eul - e_com) / max(abs(e_eul), 1e-300),
        "sandwich": sandwich,
    }
    res.checks["energy_identity"] = res.summary["energy_relative_gap"] <= 1e-6
    res.checks["w2_sandwich"] = bool(sandwich["ok"])
    return res


def run_fig1(cfg=Fig1Config()):
    lams = np.logspace(cfg.log10_min, cfg.log10_max, cfg.num)
    rows = oracle.fig1_curve(cfg.sigma, cfg.mu, lams)
    res = ExperimentResult("fig1")
    res.table = (["lambda", "exact", "gd", "toc"], rows.tolist())
    lam, ex, gd, toc = rows.T
    small = lam <= 1.0
    res.checks["gd_le_exact_everywhere"] = bool(np.all(gd <= ex))
    res.checks["gd_lt_exact_lt_toc_for_small_lambda"] = bool(np.all(gd[small] < ex[small]) and
                                                             np.all(ex[small] < toc[small]))
    res.summary = {"points": int(lam.size), "lambda_range": [float(lam[0]), float(lam[-1])]}
    return res


def hopf_lax_gradient(G, A, c, y, s):
    """Brute-force proximal point of ``H(z) + (1/2s)‖z − y‖²_{G⁻¹}`` with
    ``H(z) = ½‖Az − c‖²``, returned through the Moreau–Yosida map
    ``(1/s) G⁻¹ (y − y⁺)``, together with the optimal objective value."""
    from scipy.optimize import minimize

    Gi = np.linalg.inv(G)

    def obj(z):
        r = A @ z - c
        d = z - y
        return 0.5 * r @ r + 0.5 / s * d @ Gi @ d

    def jac(z):
        return A.T @ (A @ z - c) + Gi @ (z - y) / s

    out = minimize(obj, y.copy(), jac=jac, method="BFGS", options={"gtol": 1e-13, "maxiter": 10000})
    z = out.x
    return Gi @ (y - z) / s, float(obj(z)), obj


def run_proximal_check(cfg=ProximalConfig()):
    """Gauss-Newton control against the Hopf–Lax / Moreau–Yosida reduction on
    a diagonal linear field and a linear constraint in two dimensions."""
    rng = RngStream(cfg.seed, 0)
    sch = WeightSchedule(lambda0=cfg.lambda0)
    s = stretched_time(sch, cfg.t, 1e-3)
    rows, errs, gaps = [], [], []
    for i in range(cfg.cases):
        diag = rng.uniform(-1.5, 1.5, 2)
        field = LinearField(np.diag(diag), rng.normal(2))
        A = rng.normal((cfg.constraint_rows, 2))
        c = rng.normal(cfg.constraint_rows)
        con = LinearConstraint(A, c)
        x = rng.normal(2)
        la = Lookahead(field, x, cfg.t, cfg.k)
        D = np.column_stack([la.forward(e) for e in np.eye(2)])
        G = D @ D.T
        y = la.terminal
        gy, best, obj = hopf_lax_gradient(G, A, c, y, s)
        brute = D.T @ gy
        gn = gn_solve(field, con, x, cfg.t, s, cfg.k, cg_tol=1e-14)
        err = float(np.linalg.norm(gn - brute) / max(np.linalg.norm(brute), 1e-300))
        g_toc, tau = toc_solve(field, con, x, cfg.t, s, cfg.k, return_tau=True)
        g_y = A.T @ (A @ y - c)
        line_val = float(obj(y - s * tau * G @ g_y))
        errs.append(err)
        gaps.append(line_val - best)
        rows.append([i, err, best, line_val, float(tau)])
    res = ExperimentResult("proximal_check")
    res.table = (["case", "relative_error", "proximal_optimum", "tau_line_value", "tau"], rows)
    res.summary = {"max_relative_error": float(max(errs)), "min_line_gap": float(min(gaps)), "s": float(s)}
    res.checks["gn_matches_hopf_lax"] = max(errs) <= cfg.tolerance
    res.checks["tau_line_ge_optimum"] = min(gaps) >= -1e-12
    return res


def run_fm_train(cfg=FMTaskConfig()):
    field, trace = train(gaussian_sampler(cfg.mu, cfg.sigma), cfg.train, dim=1)
    ref = Affine1DField(cfg.mu, cfg.sigma)
    rms = probe_rms(field, ref)
    first, last = trace.window_means()
    res = ExperimentResult("fm_train")
    res.table = (["iteration", "loss"], [[i, float(v)] for i, v in enumerate(trace.losses)])
    res.summary = {"probe_rms": rms, "loss_first_window": first, "loss_last_window": last,
                   "field": trace.params}
    res.checks["probe_rms_within_tol"] = rms <= cfg.rms_tolerance
    res.checks["loss_decreasing"] = last <= first
    return res


def _probe_fields(rng):
    A = rng.normal((3, 3))
    chols = [np.tril(rng.normal((3, 3)), -1) * 0.3 + np.diag(rng.uniform(0.5, 1.5, 3)) for _ in range(2)]
    return {
        "zero": ZeroField(3),
        "constant": ConstantField(rng.normal(3)),
        "linear": LinearField(A, rng.normal(3)),
        "affine1d": Affine1DField(2.0, 0.7, 3),
        "gaussian_mixture": GaussianMixtureField([0.3, 0.7], [rng.normal(3), rng.normal(3)], chols),
        "stationary_gaussian": StationaryGaussianField(8, rng.normal(64) * 0.1, rng.uniform(0.1, 2.0, (8, 8))),
        "mlp": NeuralMLPField.initialize(3, (8, 8), rng),
    }


def _probe_constraints(rng):
    spans = [(np.arange(1, 3), -0.5, 0.5), (np.arange(5, 7), 0.0, 1.0)]
    return {
        "null": NullConstraint(4),
        "coordinate_equality": CoordinateEquality([0, 2], [1.0, -1.0], 4),
        "linear": LinearConstraint(rng.normal((2, 4)), rng.normal(2)),
        "corridor": CorridorConstraint(spans, 8),
        "darcy": DarcyConstraint(6),
        "spectrum": SpectrumConstraint(16, band=(2, 5)),
    }


def _corridor_probe(con, rng):
    """A state whose spanned coordinates stay at least 1e-3 from every bound."""
    while True:
        x = rng.normal(con.dim) * 1.5
        F = x[con.index]
        if np.min(np.minimum(np.abs(F - con.lower), np.abs(F - con.upper))) >= 1e-3:
            return x


def run_gradcheck(cfg=GradcheckConfig()):
    """Adjoint identity and finite-difference checks for every field and
    constraint type on random probes."""
    rng = RngStream(cfg.seed, 0)
    rows = []
    for name, f in _probe_fields(rng).items():
        worst_adj = worst_fd = 0.0
        for _ in range(cfg.probes):
            x = rng.normal(f.dim)
            t = float(rng.uniform(0.05, 0.95))
            v, u = rng.normal(f.dim), rng.normal(f.dim)
            worst_adj = max(worst_adj, adjoint_gap(u, f.jvp(x, t, v), f.vjp(x, t, u), v))
            worst_fd = max(worst_fd, grad_check(lambda z: u @ f.eval(z, t), lambda z: f.vjp(z, t, u), x))
        rows.append(["field", name, worst_adj, worst_fd])
    for name, c in _probe_constraints(rng).items():
        worst_adj = worst_fd = 0.0
        for _ in range(cfg.probes):
            if name == "corridor":
                x = _corridor_probe(c, rng)
            elif name == "darcy":
                x = np.concatenate([0.3 * rng.normal(c.n * c.n), rng.normal(c.n * c.n)])
            else:
                x = rng.normal(c.dim)
            v, u = rng.normal(c.dim), rng.normal(c.rdim)
            worst_adj = max(worst_adj, adjoint_gap(u, c.jvp(x, v), c.vjp(x, u), v))
            worst_fd = max(worst_fd, grad_check(c.terminal_cost, c.cost_grad, x))
        rows.append(["constraint", name, worst_adj, worst_fd])
    res = ExperimentResult("gradcheck")
    res.table = (["kind", "name", "adjoint_gap", "grad_check"], rows)
    res.summary = {"probes": cfg.probes, "max_adjoint_gap": max(r[2] for r in rows),
                   "max_grad_check": max(r[3] for r in rows)}
    res.checks["adjoint_identity"] = res.summary["max_adjoint_gap"] <= cfg.adjoint_tol
    res.checks["finite_differences"] = res.summary["max_grad_check"] <= cfg.grad_tol
    return res


def run_gen_data(cfg=GenDataConfig()):
    """Darcy pairs and spectrum fields as array artifacts (written by the CLI)."""
    res = ExperimentResult("gen_data")
    rows = []
    if cfg.darcy_count:
        pairs = gen_darcy_pairs(cfg.darcy, RngStream(cfg.seed, DARCY_STREAM), cfg.darcy_count)
        con = DarcyConstraint(cfg.darcy.n, cfg.darcy.r_src, cfg.darcy.w)
        rms = darcy_generator_rms(con, pairs)
        res.arrays["darcy_pairs"] = (pairs, {"seed": cfg.seed, "spec": cfg.darcy.model_dump()})
        res.summary["darcy_generator_rms_residual"] = rms
        rows.append(["darcy_pairs", pairs.shape[0], pairs.shape[1], rms])
    if cfg.spectrum_count:
        fields = gen_spectrum_field(cfg.spectrum, RngStream(cfg.seed, SPECTRUM_STREAM), cfg.spectrum_count)
        con = SpectrumConstraint(cfg.spectrum.n, slope=cfg.spectrum.beta)
        med = float(np.median(con.residual_norm(fields)))
        res.arrays["spectrum_fields"] = (fields, {"seed": cfg.seed, "spec": cfg.spectrum.model_dump()})
        res.summary["spectrum_median_residual"] = med
        rows.append(["spectrum_fields", fields.shape[0], fields.shape[1], med])
    res.table = (["artifact", "count", "dim", "residual"], rows)
    return res


TASKS = {
    "trajectory": (TrajectoryConfig, run_trajectory),
    "darcy": (DarcyConfig, run_darcy),
    "spectrum": (SpectrumConfig, run_spectrum),
    "gaussian": (GaussianConfig, run_gaussian),
    "fig1": (Fig1Config, run_fig1),
    "proximal_check": (ProximalConfig, run_proximal_check),
    "fm_train": (FMTaskConfig, run_fm_train),
    "gradcheck": (GradcheckConfig, run_gradcheck),
    "gen_data": (GenDataConfig, run_gen_data),
}


def run_experiment(name, config=None, workers=None):
    """Run task ``name`` with a config model, a plain dict, or defaults."""
    if name not in TASKS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(TASKS)}")
    model, fn = TASKS[name]
    if config is None:
        config = model()
    elif isinstance(config, dict):
        config = model.model_validate(config)
    try:
        if name in ("trajectory", "darcy", "spectrum"):
            return fn(config, workers=workers)
        return fn(config)
    except ConfigError:
        raise
    except Exception as exc:
        raise ExperimentError(name, exc) from exc
