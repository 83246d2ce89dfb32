"""Independent reference implementations used by the tests."""
import numpy as np

from stressrep.nn import (EncoderConfig, HeadConfig, HybridLossConfig, NetConfig, copy_target,
                          hybrid_objective, init_params)

TINY = NetConfig((12, 10), EncoderConfig((3, 4), 8), HeadConfig(10, 6))


def tiny_problem(seed=0, batch=3, loss=HybridLossConfig(1.0, 1.0)):
    """Float64 tiny net with perturbed biases and a target that differs from online."""
    g = np.random.default_rng(seed)
    online = init_params(TINY, g, np.float64)
    for k in online:
        if k.endswith(".b"):
            online[k] += g.normal(0, 0.1, online[k].shape)
    target = {k: v + g.normal(0, 0.05, v.shape) for k, v in copy_target(online).items()}
    va = g.normal(size=(batch, *TINY.input_shape))
    vb = g.normal(size=(batch, *TINY.input_shape))
    sup = g.normal(size=(batch, TINY.head.out_dim))
    return online, target, va, vb, sup, loss


def finite_difference_errors(n_params=120, seed=0, h=1e-6, loss=HybridLossConfig(1.0, 1.0)):
    """Relative errors |analytic - central FD| / max(|a|, |n|, 1e-7) on random coordinates."""
    online, target, va, vb, sup, lc = tiny_problem(seed, loss=loss)
    _, grads, _ = hybrid_objective(online, target, va, vb, sup, TINY, lc)
    g = np.random.default_rng(seed + 1)
    names = sorted(online)
    errs = []
    for _ in range(n_params):
        k = names[int(g.integers(len(names)))]
        idx = tuple(int(g.integers(n)) for n in online[k].shape)
        old = online[k][idx]
        online[k][idx] = old + h
        lp = hybrid_objective(online, target, va, vb, sup, TINY, lc, need_grads=False)[0].l_hybrid
        online[k][idx] = old - h
        lm = hybrid_objective(online, target, va, vb, sup, TINY, lc, need_grads=False)[0].l_hybrid
        online[k][idx] = old
        num = (lp - lm) / (2 * h)
        an = grads[k][idx] if k in grads else 0.0
        errs.append(abs(an - num) / max(abs(an), abs(num), 1e-7))
    return np.asarray(errs)


def svm_reference_objective(X, y, C, iters=200_000):
    """Projected gradient ascent on the box-constrained SVM dual, run to convergence.

    Same problem as the solver under test: bias as a constant extra feature and
    inverse-frequency class weights. Returns the primal objective at the result.
    """
    X = np.hstack([np.asarray(X, float), np.ones((len(X), 1))])
    ys = np.where(np.asarray(y) == np.max(y), 1.0, -1.0)
    n = len(ys)
    U = np.where(ys > 0, C * n / (2.0 * np.sum(ys > 0)), C * n / (2.0 * np.sum(ys < 0)))
    Z = X * ys[:, None]
    Q = Z @ Z.T
    step = 1.0 / np.linalg.eigvalsh(Q)[-1]
    a = np.zeros(n)
    for _ in range(iters):
        a_new = np.clip(a + step * (1.0 - Q @ a), 0.0, U)
        if np.max(np.abs(a_new - a)) < 1e-15:
            a = a_new
            break
        a = a_new
    w = Z.T @ a
    return 0.5 * w @ w + np.sum(U * np.maximum(0.0, 1.0 - ys * (X @ w)))


def uar_bruteforce(y_true, y_pred):
    classes = sorted(set(int(v) for v in y_true))
    recalls = []
    for c in classes:
        total = sum(1 for t in y_true if t == c)
        hit = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        recalls.append(hit / total)
    return sum(recalls) / len(recalls)
