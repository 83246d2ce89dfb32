import numpy as np
import pytest

from oracles import svm_reference_objective
from stressrep.errors import DataError
from stressrep.svm import augment, class_weighted_bounds, primal_objective, train_svm


def _blobs(seed, n=40, d=2, gap=4.0):
    g = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = g.normal(size=(n, d))
    X[y == 1, 0] += gap
    return X, y


@pytest.mark.parametrize("seed", range(5))
def test_separable_blobs(seed):
    X, y = _blobs(seed, gap=8.0)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)  # the evaluation pipeline always standardises
    for C in (1e-2, 1.0, 1e3):
        assert np.mean(train_svm(Z, y, C).predict(Z) == y) == 1.0
    # raw offsets need the (regularised) bias, which is cheap only at moderate C
    for C in (1.0, 1e3):
        assert np.mean(train_svm(X, y, C).predict(X) == y) == 1.0


@pytest.mark.parametrize("seed", range(8))
def test_primal_matches_reference(seed):
    g = np.random.default_rng(100 + seed)
    X = g.normal(size=(50, 5))
    y = (X @ g.normal(size=5) + 0.8 * g.normal(size=50) > 0).astype(int)
    for C in (0.1, 1.0):
        model = train_svm(X, y, C)
        ys = np.where(y == 1, 1.0, -1.0)
        w_aug = np.append(model.weights, model.bias)
        got = primal_objective(w_aug, augment(X), ys, class_weighted_bounds(ys, C))
        ref = svm_reference_objective(X, y, C)
        assert abs(got - ref) <= 1e-3 * abs(ref)


def test_large_C_keeps_sign_pattern():
    X, y = _blobs(11, gap=10.0)
    a = np.sign(train_svm(X, y, 1.0).decision_function(X))
    b = np.sign(train_svm(X, y, 1e6).decision_function(X))
    assert np.array_equal(a, b)


def test_class_weights():
    ys = np.array([1, 1, 1, -1.0])
    U = class_weighted_bounds(ys, 2.0)
    assert np.allclose(U, [2 * 4 / 6, 2 * 4 / 6, 2 * 4 / 6, 2 * 4 / 2])


def test_single_class_rejected():
    with pytest.raises(DataError):
        train_svm(np.zeros((4, 2)), np.zeros(4), 1.0)


def test_nonpositive_C_rejected():
    X, y = _blobs(0)
    with pytest.raises(ValueError):
        train_svm(X, y, 0.0)


def test_deterministic():
    X, y = _blobs(3, gap=1.0)
    a, b = train_svm(X, y, 1.0, seed=4), train_svm(X, y, 1.0, seed=4)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
    assert np.all(np.isfinite(a.weights))
