"""Outlier removal, standardization and the transfer-corpus split."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix

log = logging.getLogger(__name__)


class Scaler(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Per-feature standardization with the sample (n-1) standard deviation.

    Zero-variance features get a scale of 1 and are listed in
    ``zero_variance_``.
    """

    def fit(self, X, y=None):
        X = as_matrix(X)
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 samples to fit a scaler, got {X.shape[0]}")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        self.zero_variance_ = np.flatnonzero(std == 0)
        if self.zero_variance_.size:
            log.warning("%d zero-variance feature(s) left unscaled: %s", self.zero_variance_.size,
                        ", ".join(map(str, self.zero_variance_[:10])))
        std[std == 0] = 1.0
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        X = as_matrix(X, n_features=self.n_features_in_)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "scale_")
        X = as_matrix(X, n_features=self.n_features_in_)
        return X * self.scale_ + self.mean_


def fit_scaler(x) -> Scaler:
    return Scaler().fit(x)


def apply_scaler(scaler: Scaler, x) -> np.ndarray:
    return scaler.transform(x)


def zscores(x) -> np.ndarray:
    """Column z-scores against the matrix's own statistics; constant columns score 0."""
    x = as_matrix(x)
    if x.shape[0] < 2:
        return np.zeros_like(x)
    std = x.std(axis=0, ddof=1)
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (x - x.mean(axis=0)) / safe, 0.0)


def remove_outliers(x, threshold: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Drop rows with any feature z-score outside ``[-threshold, threshold]``.

    Returns the kept rows and the indices of the removed ones.
    """
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    x = as_matrix(x)
    bad = np.any(np.abs(zscores(x)) > threshold, axis=1)
    return x[~bad], np.flatnonzero(bad)


def stratified_subset(n: int, n_pick: int, rng: np.random.Generator,
                      groups=None) -> np.ndarray:
    """Sorted indices of ``n_pick`` rows out of ``n``, allocated across ``groups``
    by largest remainder so every group keeps its share."""
    if groups is None:
        return np.sort(rng.permutation(n)[:n_pick])
    groups = np.asarray(groups)
    labels, counts = np.unique(groups, return_counts=True)
    quota = counts * n_pick / n
    alloc = np.floor(quota).astype(int)
    short = n_pick - alloc.sum()
    # ties on the remainder go to the larger group, then the lower label
    order = np.lexsort((labels, -counts, -(quota - alloc)))
    alloc[order[:short]] += 1
    picked = []
    for lab, k in zip(labels, alloc):
        members = np.flatnonzero(groups == lab)
        picked.append(members[rng.permutation(members.size)[:k]])
    return np.sort(np.concatenate(picked))


@dataclass
class TransferSplit:
    fit_index: np.ndarray
    eval_index: np.ndarray
    fit_part: np.ndarray
    eval_part: np.ndarray
    scaler: Scaler


def transfer_standardize(x, fit_fraction: float = 0.2, seed=0, groups=None) -> TransferSplit:
    """Fit a scaler on a seeded ``fit_fraction`` of the rows and standardize the rest.

    ``fit_part`` holds the raw fitting rows (they are not evaluated downstream);
    ``eval_part`` is the standardized remainder.
    """
    if not 0.0 < fit_fraction < 1.0:
        raise ValueError("fit_fraction must lie strictly between 0 and 1")
    x = as_matrix(x)
    n = x.shape[0]
    n_fit = int(round(fit_fraction * n))
    if n_fit < 2 or n - n_fit < 1:
        raise ValueError(f"{n} rows are too few for a {fit_fraction:.0%} transfer split")
    rng = np.random.default_rng(seed)
    fit_idx = stratified_subset(n, n_fit, rng, groups)
    eval_idx = np.setdiff1d(np.arange(n), fit_idx)
    scaler = fit_scaler(x[fit_idx])
    return TransferSplit(fit_idx, eval_idx, x[fit_idx], scaler.transform(x[eval_idx]), scaler)
