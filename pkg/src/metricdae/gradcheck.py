"""Finite-difference gradient suites for the reconstruction, metric and joint losses."""

from __future__ import annotations

import numpy as np

from .dae import build_model, corrupt, joint_grad_check
from .metric import metric_loss_grad_check

DEFAULT_TOLERANCE = 1e-5


def _batch(seed: int, b: int, n_features: int):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(b, n_features))
    xn = corrupt(x, 1.0, rng)
    labels = rng.uniform(size=b)
    model = build_model(n_features, 2, rng=rng)
    # move the bias off zero so bias gradients are exercised at a generic point
    for layer in model.encoder.layers + model.decoder.layers:
        layer.bias += rng.normal(scale=0.1, size=layer.bias.shape)
    return model, x, xn, labels


def run_suite(n_seeds: int = 100, batch_sizes=(2, 64), n_features: int = 88,
              h: float = 1e-5) -> dict[str, float]:
    """Worst relative error per loss over ``n_seeds`` random problems.

    Batch sizes cycle deterministically through ``batch_sizes[0]..batch_sizes[1]``.
    """
    lo, hi = batch_sizes
    worst = {"reconstruction": 0.0, "metric": 0.0, "joint": 0.0}
    for seed in range(n_seeds):
        b = lo + seed % (hi - lo + 1)
        model, x, xn, labels = _batch(seed, b, n_features)
        worst["reconstruction"] = max(worst["reconstruction"], joint_grad_check(model, x, xn, None, h))
        worst["metric"] = max(worst["metric"], metric_loss_grad_check(b, seed, h))
        worst["joint"] = max(worst["joint"], joint_grad_check(model, x, xn, labels, h))
    return worst
