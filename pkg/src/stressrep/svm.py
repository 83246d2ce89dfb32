"""Linear SVM (L2-regularised hinge loss) trained by dual coordinate descent.

The bias is handled as an extra constant feature, so it is regularised along
with the weights. Per-sample box constraints carry inverse-frequency class
weights: U_i = C * n / (2 * n_{y_i}).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DataError

BIAS_FEATURE = 1.0


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    C: float
    n_iter: int = 0
    gap: float = float("nan")

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        """Labels in {0, 1}."""
        return (self.decision_function(X) > 0).astype(np.int64)


def _signed(y) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size != 2:
        raise DataError(f"linear SVM needs exactly two classes, got {classes.tolist()}")
    return np.where(y == classes[1], 1.0, -1.0), classes


def class_weighted_bounds(ys: np.ndarray, C: float) -> np.ndarray:
    n = len(ys)
    n_pos = np.count_nonzero(ys > 0)
    n_neg = n - n_pos
    return np.where(ys > 0, C * n / (2.0 * n_pos), C * n / (2.0 * n_neg))


def primal_objective(w_aug: np.ndarray, X_aug: np.ndarray, ys: np.ndarray, bounds: np.ndarray) -> float:
    """0.5 * ||w||^2 + sum_i U_i * max(0, 1 - y_i w.x_i) over the augmented problem."""
    margins = 1.0 - ys * (X_aug @ w_aug)
    return 0.5 * float(w_aug @ w_aug) + float(bounds @ np.maximum(margins, 0.0))


def augment(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.full((X.shape[0], 1), BIAS_FEATURE)])


@numba.njit(cache=True)
def _dual_cd(X, ys, U, tol, max_iter, seed):
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.empty(n)
    for i in range(n):
        qii[i] = X[i] @ X[i]
    np.random.seed(seed)
    gap = np.inf
    it = 0
    while it < max_iter:
        it += 1
        order = np.random.permutation(n)
        for k in range(n):
            i = order[k]
            if qii[i] <= 0.0:
                continue
            g = ys[i] * (w @ X[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == U[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), U[i])
                delta = (new - a) * ys[i]
                alpha[i] = new
                for j in range(d):
                    w[j] += delta * X[i, j]
        ww = w @ w
        hinge = 0.0
        for i in range(n):
            m = 1.0 - ys[i] * (w @ X[i])
            if m > 0.0:
                hinge += U[i] * m
        primal = 0.5 * ww + hinge
        dual = alpha.sum() - 0.5 * ww
        gap = primal - dual
        if gap <= tol * max(primal, 1e-12):
            break
    return w, alpha, it, gap


def train_svm(X, y, C: float, tol: float = 1e-4, max_iter: int = 2000, seed: int = 0) -> SvmModel:
    """Fit a class-weighted linear SVM; ``y`` holds two distinct labels (larger one is positive).

    Stops once the duality gap falls below ``tol`` relative to the primal
    objective, or after ``max_iter`` passes over the data.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    ys, _ = _signed(y)
    Xa = augment(X)
    U = class_weighted_bounds(ys, C)
    w, _, it, gap = _dual_cd(Xa, ys, U, float(tol), int(max_iter), int(seed))
    return SvmModel(w[:-1].copy(), float(w[-1] * BIAS_FEATURE), float(C), int(it), float(gap))
