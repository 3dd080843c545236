"""Flow-matching regression for a small tanh MLP with linear interpolants
and independent source/target coupling."""
import csv
import logging
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import TrainingDiverged
from .fields import NeuralMLPField
from .numcore import RngStream

log = logging.getLogger(__name__)

INIT_STREAM = 0
BATCH_STREAM = 1


class FMTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    batch_size: int = Field(256, ge=1)
    iterations: int = Field(5000, ge=1)
    lr: float = Field(1e-3, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    hidden: Tuple[int, ...] = (64, 64)
    activation: Literal["tanh"] = "tanh"
    seed: int = 0


@dataclass
class TrainTrace:
    losses: np.ndarray
    params: dict

    def window_means(self, frac=0.1):
        w = max(1, int(round(frac * self.losses.size)))
        return float(self.losses[:w].mean()), float(self.losses[-w:].mean())

    def decreasing(self, frac=0.1):
        first, last = self.window_means(frac)
        return last <= first

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss"])
            for i, v in enumerate(self.losses):
                w.writerow([i, repr(float(v))])


def fm_loss_batch(field, x0, x1, t):
    """Mean of ``½‖b_θ((1−t)x₀ + t x₁, t) − (x₁ − x₀)‖²`` over the batch.

    Returns ``(loss, (weight_grads, bias_grads))``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    t = np.asarray(t, dtype=float).reshape(-1)
    if x0.shape != x1.shape or t.size != x0.shape[0]:
        raise ValueError("x0, x1 and t must have matching batch sizes")
    B = x0.shape[0]
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    out, acts = field.forward(xt, t)
    err = out - (x1 - x0)
    loss = 0.5 * float(np.sum(err * err)) / B
    _, gW, gb = field.backward(acts, err / B)
    return loss, (gW, gb)


class _Adam:
    def __init__(self, params, lr, b1, b2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.k = 0

    def step(self, params, grads):
        if self.lr == 0.0:
            return
        self.k += 1
        c1 = 1.0 - self.b1**self.k
        c2 = 1.0 - self.b2**self.k
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(sampler, cfg=FMTrainConfig(), dim=None):
    """Fit ``b_θ`` to draws from ``sampler(rng, n) -> (n, d)``.

    ``x₀ ~ N(0, I)`` and ``t ~ U[0, 1]`` are drawn per batch element.
    Returns ``(field, trace)``; a non-finite loss raises TrainingDiverged.
    """
    init_rng = RngStream(cfg.seed, INIT_STREAM)
    rng = RngStream(cfg.seed, BATCH_STREAM)
    if dim is None:
        dim = np.atleast_2d(sampler(RngStream(cfg.seed, BATCH_STREAM + 1), 1)).shape[1]
    field = NeuralMLPField.initialize(dim, cfg.hidden, init_rng)
    params = field.params()
    nW = len(field.weights)
    opt = _Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    losses = np.empty(cfg.iterations)
    B = cfg.batch_size
    for it in range(cfg.iterations):
        x1 = np.atleast_2d(sampler(rng, B)).reshape(B, dim)
        x0 = rng.normal((B, dim))
        t = rng.uniform(0.0, 1.0, B)
        loss, (gW, gb) = fm_loss_batch(field, x0, x1, t)
        if not np.isfinite(loss):
            raise TrainingDiverged(it)
        losses[it] = loss
        opt.step(params, gW + gb)
        if it % 1000 == 0:
            log.debug("iter %d loss %.6g", it, loss)
    field.weights, field.biases = params[:nW], params[nW:]
    return field, TrainTrace(losses, field.to_dict())


def gaussian_sampler(mean, std):
    """Sampler for an isotropic Gaussian target."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))

    def draw(rng, n):
        return mean + std * rng.normal((n, mean.size))

    return draw


def probe_rms(field, ref, xs=None, ts=None):
    """RMS of ``field − ref`` over a 1-D probe grid ``xs × ts``."""
    xs = np.linspace(-3.0, 5.0, 81) if xs is None else np.asarray(xs, dtype=float)
    ts = np.linspace(0.05, 0.95, 19) if ts is None else np.asarray(ts, dtype=float)
    X = xs.reshape(-1, 1)
    sq = [np.mean((field.eval(X, t) - ref.eval(X, t)) ** 2) for t in ts]
    return float(np.sqrt(np.mean(sq)))
