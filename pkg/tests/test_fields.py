import numpy as np
import pytest

from tocflow.errors import LookaheadDiverged, ShapeError
from tocflow.fields import (Affine1DField, ConstantField, GaussianMixtureField, LinearField, Lookahead,
                            NeuralMLPField, StationaryGaussianField, ZeroField, field_from_dict, lookahead_flow,
                            pullback_grad)
from tocflow.constraints import CoordinateEquality
from tocflow.numcore import RngStream, adjoint_gap, grad_check


def _fields():
    rng = RngStream(11, 0)
    chols = [np.diag(rng.uniform(0.5, 1.5, 3)) + np.tril(rng.normal((3, 3)), -1) * 0.3 for _ in range(2)]
    return [
        ZeroField(3),
        ConstantField(rng.normal(3)),
        LinearField(rng.normal((3, 3)), rng.normal(3)),
        Affine1DField(2.0, 0.5, 3),
        GaussianMixtureField([0.4, 0.6], [rng.normal(3), rng.normal(3)], chols),
        StationaryGaussianField(4, rng.normal(16), rng.uniform(0.2, 2.0, (4, 4))),
        NeuralMLPField.initialize(3, (6, 5), rng),
    ]


@pytest.mark.parametrize("field", _fields(), ids=lambda f: type(f).__name__)
def test_adjoint_and_finite_differences(field):
    rng = RngStream(12, 0)
    for _ in range(5):
        x, v, u = rng.normal(field.dim), rng.normal(field.dim), rng.normal(field.dim)
        t = float(rng.uniform(0.05, 0.95))
        assert adjoint_gap(u, field.jvp(x, t, v), field.vjp(x, t, u), v) <= 1e-10
        assert grad_check(lambda z: u @ field.eval(z, t), lambda z: field.vjp(z, t, u), x) <= 1e-5


@pytest.mark.parametrize("field", _fields(), ids=lambda f: type(f).__name__)
def test_dict_roundtrip(field):
    x = RngStream(13, 0).normal((2, field.dim))
    assert np.allclose(field_from_dict(field.to_dict()).eval(x, 0.4), field.eval(x, 0.4))


def test_batch_matches_single():
    f = _fields()[4]
    X = RngStream(14, 0).normal((5, 3))
    batch = f.eval(X, 0.3)
    assert np.allclose(batch, np.stack([f.eval(x, 0.3) for x in X]))


def test_shape_error():
    with pytest.raises(ShapeError):
        ZeroField(3).eval(np.zeros(4), 0.0)


def test_single_component_mixture_equals_affine():
    ref = Affine1DField(2.0, 1.3)
    mix = GaussianMixtureField([1.0], [[2.0]], [[[1.3]]], eps=0.0)
    xs = np.linspace(-3, 5, 17)[:, None]
    for t in np.linspace(0.0, 0.99, 12):
        assert np.allclose(mix.eval(xs, t), ref.eval(xs, t), atol=1e-12)


def test_stationary_field_matches_dense_mixture():
    n = 4
    rng = RngStream(15, 0)
    var = rng.uniform(0.2, 2.0, (n, n))
    mean = rng.normal(n * n)
    sf = StationaryGaussianField(n, mean, var)
    F = np.fft.fft(np.eye(n * n).reshape(n * n, n, n), axis=1)
    F = np.fft.fft(F, axis=2).reshape(n * n, n * n).T / n
    cov = np.real(F.conj().T @ np.diag(sf.spectrum_var.reshape(-1)) @ F)
    mix = GaussianMixtureField.from_covariances([1.0], [mean], [cov + 1e-12 * np.eye(n * n)])
    X = rng.normal((3, n * n))
    assert np.allclose(sf.eval(X, 0.6), mix.eval(X, 0.6), atol=1e-6)


def test_affine_flow_map_limit():
    f = Affine1DField(2.0, 1.0)
    x = np.array([0.7])
    assert abs(lookahead_flow(f, x, 0.0, 2**10)[0] - (x[0] + 2.0)) <= 1e-3
    la = Lookahead(f, x, 0.3, 2**10)
    assert abs(la.forward(np.array([1.0]))[0] - 1.0 / f.v(0.3)) <= 1e-3
    assert abs(la.terminal[0] - f.flow_map(x, 0.3)[0]) <= 1e-3


def test_lookahead_identity_at_terminal_time():
    f = Affine1DField(2.0, 1.0)
    la = Lookahead(f, np.array([0.3]), 1.0, 4)
    assert la.k == 0
    assert la.terminal[0] == 0.3
    assert la.reverse(np.array([2.0]))[0] == 2.0


def test_lookahead_chains_are_adjoint():
    f = _fields()[4]
    rng = RngStream(16, 0)
    x, v, u = rng.normal(3), rng.normal(3), rng.normal(3)
    la = Lookahead(f, x, 0.2, 6)
    assert adjoint_gap(u, la.forward(v), la.reverse(u), v) <= 1e-12


def test_pullback_grad_finite_differences():
    f = Affine1DField(2.0, 1.0)
    con = CoordinateEquality([0], [0.0], 1)
    x = np.array([0.4])
    g = pullback_grad(f, con, x, 0.25, 4)
    assert grad_check(lambda z: con.terminal_cost(lookahead_flow(f, z, 0.25, 4)), lambda z: g, x) <= 1e-6


def test_lookahead_divergence():
    f = LinearField(np.eye(1) * 1e200)
    with pytest.raises(LookaheadDiverged):
        Lookahead(f, np.array([1.0]), 0.0, 4)
    la = Lookahead(f, np.array([1.0]), 0.0, 4, strict=False)
    assert not la.finite.all()


def test_mlp_shape_validation():
    with pytest.raises(ShapeError):
        NeuralMLPField([np.ones((2, 2))], [np.ones(2)])
