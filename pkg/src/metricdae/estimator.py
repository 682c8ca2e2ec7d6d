"""scikit-learn style estimator for the metric-regularized denoising autoencoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import nn
from ._validation import as_matrix, as_vector
from .dae import build_model, corrupt, decode, encode, joint_loss

log = logging.getLogger(__name__)


@dataclass
class EpochLog:
    epoch: int
    rec: float
    metric: float
    total: float
    p_mean: float
    skipped: int


class MetricDAE(TransformerMixin, BaseEstimator):
    """Denoising autoencoder with an optional continuous metric loss on its latent.

    ``fit(X)`` trains the plain DAE. ``fit(X, y)`` with scalar labels ``y`` adds
    ``metric_weight`` times the metric loss over consecutive pairs of each
    shuffled mini-batch. ``transform`` encodes clean inputs (no corruption).

    Parameters
    ----------
    latent_dim : int
    hidden_layers : tuple of int
        Encoder hidden sizes; the decoder mirrors them.
    noise_std : float
        Std of the additive Gaussian corruption.
    mask_fraction : float
        Fraction of entries that receive noise (1.0 corrupts everything).
    metric_weight : float
    detach_slope : bool
        Treat the fitted slope as a constant when differentiating.
    epochs, batch_size, learning_rate : training schedule (Adam).
    random_state : int, SeedSequence or None
    """

    def __init__(self, latent_dim=2, hidden_layers=(), noise_std=1.0, mask_fraction=1.0,
                 metric_weight=1.0, detach_slope=False, epochs=50, batch_size=64,
                 learning_rate=1e-3, random_state=None):
        self.latent_dim = latent_dim
        self.hidden_layers = hidden_layers
        self.noise_std = noise_std
        self.mask_fraction = mask_fraction
        self.metric_weight = metric_weight
        self.detach_slope = detach_slope
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _streams(self):
        ss = self.random_state
        if not isinstance(ss, np.random.SeedSequence):
            ss = np.random.SeedSequence(ss)
        # derived by key rather than spawn(), which mutates ss and would break refits
        return tuple(
            np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)))
            for i in range(3)
        )

    def fit(self, X, y=None):
        X = as_matrix(X)
        if y is not None:
            y = as_vector(y, n=X.shape[0])
        for name in ("epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")

        init_rng, shuffle_rng, noise_rng = self._streams()
        model = build_model(X.shape[1], self.latent_dim, tuple(self.hidden_layers), init_rng,
                            self.noise_std, self.metric_weight)
        opt_enc = nn.AdamState.for_params(model.encoder, lr=self.learning_rate)
        opt_dec = nn.AdamState.for_params(model.decoder, lr=self.learning_rate)
        supervised = y is not None and self.metric_weight > 0

        history = []
        n, bs = X.shape[0], int(self.batch_size)
        for epoch in range(int(self.epochs)):
            order = shuffle_rng.permutation(n)
            rec_sum = met_sum = tot_sum = p_sum = 0.0
            n_batches = n_met = skipped = 0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                xb = X[idx]
                xn = corrupt(xb, self.noise_std, noise_rng, self.mask_fraction)
                res = joint_loss(model, xb, xn, y[idx] if supervised else None,
                                 detach_slope=self.detach_slope)
                if not np.isfinite(res.total):
                    raise FloatingPointError(f"non-finite training loss at epoch {epoch + 1}")
                nn.adam_step(model.encoder, res.enc_grads, opt_enc)
                nn.adam_step(model.decoder, res.dec_grads, opt_dec)
                n_batches += 1
                rec_sum += res.rec
                tot_sum += res.total
                if supervised:
                    if res.metric is None or res.metric.skipped:
                        skipped += 1
                    else:
                        met_sum += res.metric.l_met
                        p_sum += res.metric.p
                        n_met += 1
            entry = EpochLog(epoch + 1, rec_sum / n_batches,
                             met_sum / n_met if n_met else 0.0, tot_sum / n_batches,
                             p_sum / n_met if n_met else float("nan"), skipped)
            log.debug("epoch %d rec=%.5f met=%.5f p=%.4f skipped=%d", entry.epoch, entry.rec,
                      entry.metric, entry.p_mean, entry.skipped)
            history.append(entry)

        self.model_ = model
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return encode(self.model_, as_matrix(X, n_features=self.n_features_in_))

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return decode(self.model_, as_matrix(Z, n_features=self.latent_dim, name="Z"))

    def reconstruction_error(self, X) -> float:
        X = as_matrix(X, n_features=self.n_features_in_)
        err = self.inverse_transform(self.transform(X)) - X
        return float(np.mean(err * err))

    @property
    def n_params_(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.n_params()
