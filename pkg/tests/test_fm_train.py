import numpy as np
import pytest

from tocflow.errors import TrainingDiverged
from tocflow.fields import Affine1DField, NeuralMLPField
from tocflow.fm_train import FMTrainConfig, fm_loss_batch, gaussian_sampler, probe_rms, train
from tocflow.numcore import RngStream


def _loss_of(field, x0, x1, t):
    return fm_loss_batch(field, x0, x1, t)[0]


def test_parameter_gradients_finite_differences():
    rng = RngStream(51, 0)
    field = NeuralMLPField.initialize(1, (2,), rng)
    x0, x1, t = rng.normal((5, 1)), rng.normal((5, 1)) + 2, rng.uniform(0, 1, 5)
    _, (gW, gb) = fm_loss_batch(field, x0, x1, t)
    eps = 1e-6
    for p, g in zip(field.params(), gW + gb):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = _loss_of(field, x0, x1, t)
            flat[i] = old - eps
            lm = _loss_of(field, x0, x1, t)
            flat[i] = old
            fd = (lp - lm) / (2 * eps)
            assert abs(gflat[i] - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_loss_is_zero_for_exact_displacement():
    field = NeuralMLPField([np.zeros((1, 2))], [np.array([2.0])])
    x0 = np.zeros((4, 1))
    loss, _ = fm_loss_batch(field, x0, x0 + 2.0, np.linspace(0, 1, 4))
    assert loss == 0.0


def test_training_is_seeded_and_decreasing():
    cfg = FMTrainConfig(iterations=300, batch_size=64, lr=3e-3, hidden=(16,), seed=3)
    f1, tr1 = train(gaussian_sampler(2.0, 1.0), cfg, dim=1)
    f2, tr2 = train(gaussian_sampler(2.0, 1.0), cfg, dim=1)
    assert np.array_equal(tr1.losses, tr2.losses)
    assert tr1.decreasing()
    assert probe_rms(f1, Affine1DField(2.0, 1.0)) == probe_rms(f2, Affine1DField(2.0, 1.0))


def test_zero_learning_rate_keeps_initialization():
    cfg = FMTrainConfig(iterations=5, batch_size=8, lr=0.0, hidden=(4,))
    field, _ = train(gaussian_sampler(0.0, 1.0), cfg, dim=1)
    init = NeuralMLPField.initialize(1, (4,), RngStream(cfg.seed, 0))
    assert all(np.array_equal(a, b) for a, b in zip(field.params(), init.params()))


def test_divergence_raises():
    def bad(rng, n):
        return np.full((n, 1), np.nan)

    with pytest.raises(TrainingDiverged):
        train(bad, FMTrainConfig(iterations=3, batch_size=4, hidden=(4,)), dim=1)


def test_trace_csv(tmp_path):
    cfg = FMTrainConfig(iterations=4, batch_size=4, hidden=(4,))
    _, trace = train(gaussian_sampler(1.0, 1.0), cfg, dim=1)
    p = tmp_path / "loss.csv"
    trace.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,loss" and len(lines) == 5


def test_probe_rms_of_reference_is_zero():
    ref = Affine1DField(2.0, 1.0)
    assert probe_rms(ref, ref) == 0.0
