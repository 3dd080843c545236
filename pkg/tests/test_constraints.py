import numpy as np
import pytest

from tocflow.constraints import (CoordinateEquality, CorridorConstraint, DarcyConstraint, LinearConstraint,
                                 NullConstraint, SpectrumConstraint, constraint_from_dict, terminal_cost)
from tocflow.errors import GridTooSmall, ShapeError
from tocflow.experiments.generators import SpectrumGenSpec, gen_spectrum_field
from tocflow.numcore import RngStream, adjoint_gap, grad_check


def _constraints():
    rng = RngStream(21, 0)
    return [
        NullConstraint(4),
        CoordinateEquality([0, 2], [1.0, -1.0], 4),
        LinearConstraint(rng.normal((2, 4)), rng.normal(2)),
        CorridorConstraint([(np.arange(1, 3), -0.5, 0.5), (np.arange(5, 7), 0.0, 1.0)], 8),
        DarcyConstraint(5),
        SpectrumConstraint(16, band=(2, 5)),
    ]


def _probe(c, rng):
    if isinstance(c, CorridorConstraint):
        while True:
            x = 1.5 * rng.normal(c.dim)
            F = x[c.index]
            if np.min(np.minimum(abs(F - c.lower), abs(F - c.upper))) > 1e-3:
                return x
    if isinstance(c, DarcyConstraint):
        return np.concatenate([0.3 * rng.normal(c.n**2), rng.normal(c.n**2)])
    return rng.normal(c.dim)


@pytest.mark.parametrize("con", _constraints(), ids=lambda c: type(c).__name__)
def test_adjoint_and_cost_gradient(con):
    rng = RngStream(22, 0)
    for _ in range(5):
        x = _probe(con, rng)
        v, u = rng.normal(con.dim), rng.normal(con.rdim)
        assert adjoint_gap(u, con.jvp(x, v), con.vjp(x, u), v) <= 1e-10
        assert grad_check(con.terminal_cost, con.cost_grad, x) <= 1e-5


@pytest.mark.parametrize("con", _constraints(), ids=lambda c: type(c).__name__)
def test_dict_roundtrip(con):
    x = _probe(con, RngStream(23, 0))
    assert np.allclose(constraint_from_dict(con.to_dict()).residual(x), con.residual(x))


def test_terminal_cost_is_half_squared_norm():
    c = CoordinateEquality([1], [2.0], 3)
    assert terminal_cost(c, np.array([0.0, 5.0, 0.0])) == 4.5
    assert np.allclose(c.terminal_cost(np.zeros((2, 3))), [2.0, 2.0])


def test_corridor_residual_values():
    c = CorridorConstraint([([0, 1], -1.0, 1.0)], 3)
    r = c.residual(np.array([-1.5, 0.3, 9.0]))
    assert np.allclose(r, [0.5 / np.sqrt(2), 0.0])
    with pytest.raises(ValueError):
        CorridorConstraint([([0], 1.0, -1.0)], 3)
    with pytest.raises(ValueError):
        CorridorConstraint([([5], -1.0, 1.0)], 3)


def test_shape_errors():
    with pytest.raises(ShapeError):
        LinearConstraint(np.eye(2)).residual(np.zeros(3))
    with pytest.raises(ShapeError):
        LinearConstraint(np.eye(2)).vjp(np.zeros(2), np.zeros(3))


def test_darcy_grid_too_small():
    with pytest.raises(GridTooSmall):
        DarcyConstraint(2)


def test_darcy_constant_pressure_leaves_only_source():
    c = DarcyConstraint(6)
    x = np.concatenate([np.zeros(36), np.full(36, 3.0)])
    r = c.residual(x).reshape(6, 6)
    assert np.allclose(r[1:-1, 1:-1], -c.source[1:-1, 1:-1])
    assert np.allclose(r[0], 0.0) and np.allclose(r[:, -1], 0.0)


def test_spectrum_constructed_field():
    n = 64
    c = SpectrumConstraint(n, band=(2, 9))
    w = gen_spectrum_field(SpectrumGenSpec(n=n), RngStream(24, 0))
    E = c.energy_spectrum(w)
    ks = np.arange(2, 10)
    assert np.all(np.abs(E[ks - 1] / ks ** (-5 / 3) - 1) <= 0.02)
    assert float(c.residual(w)[0]) <= 1e-3


def test_spectrum_steeper_slope_residual():
    c = SpectrumConstraint(64, band=(2, 9))
    w = gen_spectrum_field(SpectrumGenSpec(n=64, beta=2.0), RngStream(25, 0))
    expected = np.var(-np.log(np.arange(2, 10)) / 3.0)
    assert abs(expected - 0.025868018651968) <= 1e-12
    assert abs(float(c.residual(w)[0]) - expected) <= 0.1 * expected


def test_spectrum_band_validation():
    with pytest.raises(ValueError):
        SpectrumConstraint(16, band=(0, 4))
    with pytest.raises(ValueError):
        SpectrumConstraint(16, band=(2, 8))
