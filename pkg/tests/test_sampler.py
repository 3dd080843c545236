import numpy as np
import pytest

from tocflow import oracle
from tocflow.constraints import CoordinateEquality, NullConstraint
from tocflow.errors import SampleDiverged
from tocflow.fields import Affine1DField, GaussianMixtureField, LinearField
from tocflow.guidance import GuidanceConfig
from tocflow.numcore import RngStream
from tocflow.sampler import SamplerConfig, integrate, sample_batch, sample_one, summarize_costs


def test_vanilla_reproduces_reference_law():
    cfg = SamplerConfig(steps=2000, n_samples=10_000, chunk_size=10_000)
    r = sample_batch(Affine1DField(2.0, 1.0), NullConstraint(1), cfg, keep_states=True)
    x = r.states[:, 0]
    assert abs(x.mean() - 2.0) <= 0.05
    assert abs(x.std() - 1.0) <= 0.05


def test_tocflow_std_matches_oracle():
    g = GuidanceConfig(method="tocflow", k=64, lambda0=1.0)
    cfg = SamplerConfig(steps=2000, scale_control_by_dt=True, guidance=g, n_samples=10_000,
                        chunk_size=10_000)
    r = sample_batch(Affine1DField(2.0, 1.0), CoordinateEquality([0], [0.0], 1), cfg, keep_states=True)
    ref = oracle.scheme_moments(oracle.Gaussian1DModel.constant(1.0), "tocflow").std
    assert abs(r.states[:, 0].std(ddof=1) / ref - 1) <= 0.02


def test_results_independent_of_workers_and_chunks():
    rng = RngStream(41, 0)
    field = GaussianMixtureField([0.5, 0.5], [rng.normal(2), rng.normal(2)], [np.eye(2), 0.5 * np.eye(2)])
    con = CoordinateEquality([0], [0.3], 2)
    base = dict(steps=50, guidance=GuidanceConfig(method="tocflow"), n_samples=9)
    a = sample_batch(field, con, SamplerConfig(chunk_size=9, **base), workers=1, keep_states=True)
    b = sample_batch(field, con, SamplerConfig(chunk_size=2, **base), workers=3, keep_states=True)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.costs, b.costs)


def test_guidance_lowers_cost():
    field = Affine1DField(2.0, 1.0)
    con = CoordinateEquality([0], [0.0], 1)
    costs = {}
    for m in ("vanilla", "gd", "tocflow", "gn", "gn_approx", "terminal_projection"):
        cfg = SamplerConfig(steps=100, guidance=GuidanceConfig(method=m, eta=1.0), n_samples=16)
        costs[m] = np.median(sample_batch(field, con, cfg).costs)
    assert all(costs[m] < costs["vanilla"] for m in costs if m != "vanilla")
    assert costs["terminal_projection"] <= 1e-20


def test_divergence_is_recorded():
    field = LinearField(np.eye(1) * 50.0)
    cfg = SamplerConfig(steps=20, integrator="euler", n_samples=3)
    r = sample_batch(field, NullConstraint(1), cfg)
    assert np.all(r.diverged)
    assert np.all(np.isnan(r.costs))
    s = r.summary()
    assert s["divergences"] == 3 and s["mean"] is None
    with pytest.raises(SampleDiverged):
        sample_one(field, NullConstraint(1), cfg, RngStream(0, 0))


def test_gamma_ge_one_schedule_stays_finite():
    g = GuidanceConfig(method="tocflow", lambda0=1.0, gamma=2.0, k=8)
    cfg = SamplerConfig(steps=200, scale_control_by_dt=True, guidance=g)
    X, div = integrate(Affine1DField(2.0, 1.0), CoordinateEquality([0], [0.0], 1), cfg, np.array([[0.5]]))
    assert div[0] < 0 and np.isfinite(X).all()


def test_summary_statistics():
    s = summarize_costs(np.array([1.0, 4.0, np.nan]), np.array([-1, -1, 5]))
    assert s["n_samples"] == 3 and s["divergences"] == 1
    assert s["mean"] == 2.5 and s["geomean"] == pytest.approx(2.0)
