"""Downstream analyses of embeddings: OLS diagnostics, a linear SVC and balanced accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector

SIGNIFICANCE_LEVEL = 0.05
RIDGE_FALLBACK = 1e-10


# -- F distribution ----------------------------------------------------------

def _beta_cf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: int, d2: int) -> float:
    """P(F > f) for an F(d1, d2) variable."""
    if d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if math.isnan(f):
        return math.nan
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_regularized(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


# -- OLS ---------------------------------------------------------------------

@dataclass
class OlsResult:
    intercept: float
    coef: np.ndarray
    r2: float
    r2_adjusted: float
    f_statistic: float
    p_value: float
    n: int
    k: int
    ridge_fallback: bool = False
    degenerate: bool = False

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coef])

    @property
    def significant(self) -> bool:
        return bool(self.p_value <= SIGNIFICANCE_LEVEL)


def adjusted_r2(r2: float, n: int, k: int) -> float:
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def ols_fit(X, y) -> OlsResult:
    """OLS with an intercept, plus R^2, adjusted R^2 and the overall F-test.

    A rank-deficient design is solved with a tiny ridge term and flagged. A
    constant response leaves R^2 undefined; the result is flagged ``degenerate``
    and its statistics are NaN.
    """
    X = as_matrix(X)
    n, k = X.shape
    y = as_vector(y, n=n)
    if n <= k + 1:
        raise ValueError(f"OLS needs n > k + 1 (n={n}, k={k})")
    A = np.column_stack([np.ones(n), X])
    ridge = np.linalg.matrix_rank(A) < k + 1
    if ridge:
        beta = np.linalg.solve(A.T @ A + RIDGE_FALLBACK * np.eye(k + 1), A.T @ y)
    else:
        beta = np.linalg.lstsq(A, y, rcond=None)[0]
    resid = y - A @ beta
    ssr = float(resid @ resid)
    dev = y - y.mean()
    sst = float(dev @ dev)
    if sst == 0.0:
        return OlsResult(float(beta[0]), beta[1:], math.nan, math.nan, math.nan, math.nan,
                         n, k, ridge, degenerate=True)
    r2 = 1.0 - ssr / sst
    df2 = n - k - 1
    if r2 >= 1.0:
        fstat = math.inf
    else:
        fstat = (r2 / k) / ((1.0 - r2) / df2)
    return OlsResult(float(beta[0]), beta[1:], r2, adjusted_r2(r2, n, k), fstat,
                     f_survival(max(fstat, 0.0), k, df2), n, k, ridge)


def ols_label_analysis(z, labels) -> OlsResult:
    """Regress labels on the latent coordinates."""
    z = as_matrix(z, name="z")
    if z.shape[0] <= 3:
        raise ValueError("label analysis needs more than 3 samples")
    return ols_fit(z, labels)


def pair_regressors(z, labels, euclidean: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive-pair latent distance regressors and label distances.

    By default each latent dimension contributes its absolute difference as a
    separate regressor; ``euclidean=True`` uses the single Euclidean distance.
    """
    z = as_matrix(z, name="z")
    labels = as_vector(labels, n=z.shape[0], name="labels")
    dz = np.abs(np.diff(z, axis=0))
    if euclidean:
        dz = np.sqrt(np.sum(dz * dz, axis=1, keepdims=True))
    return dz, np.abs(np.diff(labels))


def ols_distance_analysis(z, labels, euclidean: bool = False) -> OlsResult:
    """Regress label distances on latent distances over consecutive pairs."""
    if np.asarray(z).shape[0] < 4:
        raise ValueError("distance analysis needs at least 4 samples")
    dz, dl = pair_regressors(z, labels, euclidean)
    return ols_fit(dz, dl)


# -- linear SVC --------------------------------------------------------------

@numba.njit(cache=True)
def _dual_cd_epoch(X, y, alpha, w, qdiag, upper, order):
    for idx in range(order.shape[0]):
        i = order[idx]
        g = 0.0
        for j in range(X.shape[1]):
            g += w[j] * X[i, j]
        g = y[i] * g - 1.0
        a_old = alpha[i]
        a_new = a_old - g / qdiag[i]
        if a_new < 0.0:
            a_new = 0.0
        elif a_new > upper:
            a_new = upper
        if a_new != a_old:
            step = (a_new - a_old) * y[i]
            for j in range(X.shape[1]):
                w[j] += step * X[i, j]
            alpha[i] = a_new


def _train_binary(Xt, y, C, tol, max_iter, rng):
    """Dual coordinate descent for min 0.5|w|^2 + C * mean(hinge)."""
    n = Xt.shape[0]
    upper = C / n
    alpha = np.zeros(n)
    w = np.zeros(Xt.shape[1])
    qdiag = np.maximum(np.einsum("ij,ij->i", Xt, Xt), 1e-12)
    prev = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        _dual_cd_epoch(Xt, y, alpha, w, qdiag, upper, rng.permutation(n))
        dual = alpha.sum() - 0.5 * float(w @ w)
        if abs(dual - prev) < tol:
            break
        prev = dual
    primal = 0.5 * float(w @ w) + upper * float(np.maximum(0.0, 1.0 - y * (Xt @ w)).sum())
    return w, it, primal


class LinearSVC(ClassifierMixin, BaseEstimator):
    """One-vs-rest linear SVM on the L2-regularized mean hinge loss.

    The bias is learned as the weight of a constant feature (so it is
    regularized too). Each binary problem is solved by dual coordinate descent
    until the dual objective changes by less than ``tol`` over an epoch or
    ``max_iter`` epochs have run. Predictions take the arg-max score, ties
    going to the lowest class id.
    """

    def __init__(self, C: float = 1.0, tol: float = 1e-6, max_iter: int = 10_000,
                 random_state: int = 0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_vector(y, n=X.shape[0], dtype=np.int64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("LinearSVC needs at least two classes")
        if self.C <= 0:
            raise ValueError("C must be > 0")
        Xt = np.column_stack([X, np.ones(X.shape[0])])
        rng = np.random.default_rng(self.random_state)
        W, b, iters, objs = [], [], [], []
        for cls in self.classes_:
            yb = np.where(y == cls, 1.0, -1.0)
            w, it, obj = _train_binary(Xt, yb, self.C, self.tol, self.max_iter, rng)
            W.append(w[:-1])
            b.append(w[-1])
            iters.append(it)
            objs.append(obj)
        self.coef_ = np.array(W)
        self.intercept_ = np.array(b)
        self.n_iter_ = np.array(iters)
        self.objective_ = np.array(objs)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = as_matrix(X, n_features=self.n_features_in_)
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def svc_train(X, class_ids, reg_C: float = 1.0, seed: int = 0) -> LinearSVC:
    return LinearSVC(C=reg_C, random_state=seed).fit(X, class_ids)


def svc_predict(model: LinearSVC, X) -> np.ndarray:
    return model.predict(X)


# -- classification metrics --------------------------------------------------

@dataclass
class ClassificationReport:
    classes: np.ndarray
    confusion: np.ndarray
    recall: dict = field(default_factory=dict)
    balanced_accuracy: float = math.nan


def classification_report(true_ids, predicted_ids) -> ClassificationReport:
    """Confusion matrix (rows = true class) over the union of observed classes."""
    t = as_vector(true_ids, dtype=np.int64, name="true_ids")
    p = as_vector(predicted_ids, n=t.shape[0], dtype=np.int64, name="predicted_ids")
    if t.size == 0:
        raise ValueError("balanced accuracy of an empty set is undefined")
    classes = np.unique(np.concatenate([t, p]))
    pos = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((classes.size, classes.size), dtype=np.int64)
    for a, b in zip(t, p):
        cm[pos[a], pos[b]] += 1
    recall = {int(c): cm[pos[c], pos[c]] / cm[pos[c]].sum() for c in np.unique(t)}
    return ClassificationReport(classes, cm, recall, float(np.mean(list(recall.values()))))


def balanced_accuracy(true_ids, predicted_ids) -> float:
    """Mean per-class recall over the classes present in ``true_ids``."""
    return classification_report(true_ids, predicted_ids).balanced_accuracy
