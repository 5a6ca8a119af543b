"""Finite-difference verification of the analytic network gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelConfig, SeqModel, bce_value, class_weights, forward, loss_and_grad

KINK_MARGIN = 1e-3


def relative_error(a, n, floor=1e-6):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def _relu_inputs(model, x):
    _, cache = forward(model, x, return_cache=True)
    _, z1, _, _, z2, _ = cache["enc"]
    _, pre = cache["head"]
    return [z1, z2] + pre[:-1]


def kink_free_input(model, rng, length, margin=KINK_MARGIN, tries=1000):
    """Draw standard-normal features until no ReLU input lies within ``margin`` of 0.

    Central differences straddling a ReLU kink do not estimate the derivative,
    so such inputs are redrawn rather than scored.
    """
    for _ in range(tries):
        x = rng.normal(size=(length, model.cfg.n_features))
        if all(np.abs(z).min() >= margin for z in _relu_inputs(model, x)):
            return x
    raise RuntimeError("could not draw an input away from ReLU kinks")


@dataclass
class GradcheckResult:
    seed: int
    max_rel_error: float
    per_group: dict

    def ok(self, tol=1e-4):
        return self.max_rel_error <= tol


def gradient_check(seed=0, n_features=11, hidden=8, length=6, eps=1e-5, n_layers=2) -> GradcheckResult:
    """Compare BPTT gradients with central differences on a random tiny model."""
    cfg = ModelConfig(n_features=n_features, encoder_size=hidden, hidden_size=hidden,
                      n_layers=n_layers, head_sizes=(hidden, hidden))
    model = SeqModel(cfg, seed=seed)
    rng = np.random.default_rng([seed, 1])
    x = kink_free_input(model, rng, length)
    y = rng.integers(-1, 2, length)
    y[rng.integers(length)] = rng.integers(0, 2)
    w = class_weights([y])
    _, grads, _ = loss_and_grad(model, x, y, w)
    numeric = np.empty_like(model.flat)
    base = model.flat.copy()
    for i in range(base.size):
        model.flat[i] = base[i] + eps
        up = bce_value(forward(model, x), y, w)
        model.flat[i] = base[i] - eps
        down = bce_value(forward(model, x), y, w)
        model.flat[i] = base[i]
        numeric[i] = (up - down) / (2 * eps)
    err = relative_error(grads.flat, numeric)
    per_group, pos = {}, 0
    for name, shape in model.shapes:
        n = int(np.prod(shape))
        per_group[name] = float(err[pos:pos + n].max())
        pos += n
    return GradcheckResult(seed, float(err.max()), per_group)
