"""Continuous metric loss on consecutive latent pairs.

For a batch of latents ``z`` (b x 2) and scalar labels ``l`` (b,), consecutive
rows are paired. The latent pair distances ``z_d`` are regressed through the
origin on the label distances ``l_d`` to get a slope ``p``; the loss is the mean
squared residual of that fit plus ``|p - 1|``, which pushes latent distances to
equal label distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERACY_EPS = 1e-12


class DegenerateLabelsError(ValueError):
    """Raised when all label distances in a batch are (numerically) zero."""


@dataclass
class PairDistances:
    z_d: np.ndarray
    l_d: np.ndarray
    diffs: np.ndarray  # z[i+1] - z[i], kept for the backward pass


@dataclass
class MetricLossResult:
    p: float
    l_res: float
    l_sl: float
    l_met: float
    grad_z: np.ndarray
    skipped: bool = False


def pair_distances(z, labels) -> PairDistances:
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.ndim != 2:
        raise ValueError(f"z must be 2-D, got shape {z.shape}")
    if z.shape[0] != labels.shape[0]:
        raise ValueError(f"{z.shape[0]} latent rows but {labels.shape[0]} labels")
    if z.shape[0] < 2:
        raise ValueError("need at least two samples to form a pair")
    if not np.all(np.isfinite(labels)):
        raise ValueError("labels contain non-finite values")
    diffs = z[1:] - z[:-1]
    return PairDistances(np.sqrt(np.sum(diffs * diffs, axis=1)), np.abs(np.diff(labels)), diffs)


def fit_slope(pd: PairDistances, eps: float = DEGENERACY_EPS) -> float:
    """Least-squares slope through the origin of ``z_d`` on ``l_d``."""
    ss = float(pd.l_d @ pd.l_d)
    if ss <= eps:
        raise DegenerateLabelsError(f"label distances are degenerate (sum of squares {ss:.3g})")
    return float(pd.l_d @ pd.z_d) / ss


def metric_loss(z, labels, detach_slope: bool = False) -> MetricLossResult:
    """Residual + slope loss and its exact gradient w.r.t. ``z``.

    The gradient flows through ``p`` unless ``detach_slope`` is set. Where two
    consecutive latents coincide the distance gradient is taken as 0.
    """
    z = np.asarray(z, dtype=np.float64)
    pd = pair_distances(z, labels)
    try:
        p = fit_slope(pd)
    except DegenerateLabelsError:
        return MetricLossResult(0.0, 0.0, 0.0, 0.0, np.zeros_like(z), skipped=True)

    m = pd.z_d.size
    ss = float(pd.l_d @ pd.l_d)
    resid = pd.z_d - p * pd.l_d
    l_res = float(resid @ resid) / m
    l_sl = abs(p - 1.0)

    # d/dz_d of the residual term; the through-p part is ~0 at the LS optimum
    # but kept so the gradient is exact.
    g_zd = (2.0 / m) * resid
    if not detach_slope:
        g_zd -= (2.0 / m) * float(resid @ pd.l_d) * pd.l_d / ss
        g_zd += np.sign(p - 1.0) * pd.l_d / ss

    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(pd.z_d[:, None] > 0, pd.diffs / pd.z_d[:, None], 0.0)
    contrib = g_zd[:, None] * unit
    grad_z = np.zeros_like(z)
    grad_z[1:] += contrib
    grad_z[:-1] -= contrib
    return MetricLossResult(p, l_res, l_sl, l_res + l_sl, grad_z)


def metric_loss_value(z, labels) -> float:
    return metric_loss(z, labels).l_met


def metric_loss_grad_check(b: int, seed: int, h: float = 1e-5, min_dist: float = 1e-2) -> float:
    """Max relative error of :func:`metric_loss` gradients against central differences
    on a random batch whose consecutive latents are at least ``min_dist`` apart."""
    from .nn import grad_check

    if b < 2:
        raise ValueError("b must be >= 2")
    rng = np.random.default_rng(seed)
    labels = rng.uniform(0.0, 1.0, size=b)
    while True:
        z = rng.normal(size=(b, 2))
        if np.min(np.linalg.norm(np.diff(z, axis=0), axis=1)) > min_dist:
            break
    res = metric_loss(z, labels)
    return grad_check([z], lambda: metric_loss(z, labels).l_met, [res.grad_z], h=h)
