import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import TINY, finite_difference_errors, tiny_problem
from stressrep.checkpoint import load_checkpoint, save_checkpoint
from stressrep.errors import CheckpointError, NumericalError
from stressrep.nn import (Adam, HybridLossConfig, NetConfig, byol_loss, copy_target, ema_update, embed,
                          forward_online, forward_target, hybrid_loss, hybrid_objective, init_params, sup_loss)


def _params(seed=0, dtype=np.float32):
    return init_params(TINY, np.random.default_rng(seed), dtype)


def _x(seed=0, b=2):
    return np.random.default_rng(seed).uniform(-5, 5, (b, *TINY.input_shape)).astype(np.float32)


# ------------------------------------------------------------------ forward

def test_shapes():
    p = _params()
    out = forward_online(p, _x(), TINY)
    assert out.embedding.shape == (2, 8)
    assert out.projection.shape == (2, 6) and out.prediction.shape == (2, 6)
    assert forward_target(copy_target(p), _x(), TINY).shape == (2, 6)


def test_zero_final_layers_give_biases():
    p = _params()
    p["proj.fc2.w"][:] = 0
    p["pred.fc2.w"][:] = 0
    p["proj.fc2.b"][:] = np.arange(6)
    p["pred.fc2.b"][:] = -np.arange(6)
    out = forward_online(p, _x(), TINY)
    assert np.all(out.projection == np.arange(6))
    assert np.all(out.prediction == -np.arange(6))


def test_forward_is_pure():
    p = _params()
    a, b = forward_online(p, _x(), TINY), forward_online(p, _x(), TINY)
    assert np.array_equal(a.prediction, b.prediction) and np.array_equal(a.embedding, b.embedding)


def test_fuzz_finite():
    p = _params()
    t = copy_target(p)
    for s in range(100):
        x = _x(s, 1)
        out = forward_online(p, x, TINY)
        assert np.all(np.isfinite(out.prediction)) and np.all(np.isfinite(out.embedding))
        assert np.all(np.isfinite(forward_target(t, x, TINY)))


def test_copy_target_matches_online():
    p = _params()
    t = copy_target(p)
    assert set(t) == {k for k in p if not k.startswith("pred.")}
    assert all(t[k].shape == p[k].shape for k in t)
    x = _x()
    assert np.array_equal(forward_target(t, x, TINY), forward_online(p, x, TINY).projection)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        forward_online(_params(), np.zeros((1, 11, 10), np.float32), TINY)


def test_embed_any_length():
    p = _params()
    assert embed(p, np.zeros((1, 40, 10), np.float32), TINY).shape == (1, 8)
    with pytest.raises(ValueError):
        embed(p, np.zeros((1, 40, 9), np.float32), TINY)


def test_pooling_must_not_vanish():
    with pytest.raises(ValueError):
        NetConfig((3, 64))


# ------------------------------------------------------------------ losses

def test_byol_loss_examples():
    v = np.array([0.3, -1.2, 2.0])
    assert byol_loss(v, v) == pytest.approx(0.0, abs=1e-12)
    assert byol_loss(v, -v) == pytest.approx(4.0, abs=1e-12)
    assert byol_loss([1.0, 0, 0], [0, 1.0, 0]) == 2.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(1e-3, 1e3), b=st.floats(1e-3, 1e3))
def test_byol_loss_range_and_scale_invariance(seed, a, b):
    g = np.random.default_rng(seed)
    p, t = g.normal(size=16), g.normal(size=16)
    val = byol_loss(p, t)
    assert 0.0 <= val <= 4.0
    assert abs(byol_loss(a * p, b * t) - val) <= 1e-9


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 300), scale=st.floats(-6, 6))
def test_byol_loss_exact_at_parallel_and_antipodal(seed, n, scale):
    v = np.random.default_rng(seed).normal(size=n) * 10.0 ** scale
    assert byol_loss(v, v) == 0.0
    assert byol_loss(v, -v) == 4.0


def test_byol_zero_norm_clamped(caplog):
    val = byol_loss(np.zeros(4), np.ones(4))
    assert math.isfinite(val) and val == 2.0
    assert "zero-norm" in caplog.text


def test_sup_loss_examples(rng):
    a = rng.normal(size=115)
    assert sup_loss(a, a) == 0.0
    assert sup_loss(a, a + 1.0) == pytest.approx(1.0, abs=1e-12)
    for _ in range(50):
        x, y = rng.normal(size=115), rng.normal(size=115)
        brute = sum((float(u) - float(v)) ** 2 for u, v in zip(x, y)) / 115
        assert abs(sup_loss(x, y) - brute) <= 1e-12
    with pytest.raises(ValueError):
        sup_loss(np.zeros(3), np.zeros(4))


def test_hybrid_loss_examples():
    assert hybrid_loss(0.5, 0.2, HybridLossConfig(1.0, 1.0)).l_hybrid == pytest.approx(0.7, abs=1e-15)
    parts = hybrid_loss(0.8, 0.3, HybridLossConfig(2.5, 0.0))
    assert parts.l_hybrid == 2.5 * 0.8
    assert (parts.l_ss, parts.l_sup) == (0.8, 0.3)


def test_hybrid_config_validation():
    with pytest.raises(ValueError):
        HybridLossConfig(0.0, 0.0)
    with pytest.raises(ValueError):
        HybridLossConfig(-1.0, 1.0)


def test_alpha_ss_zero_kills_ssl_path():
    online, target, va, vb, sup, _ = tiny_problem(3)
    _, grads, _ = hybrid_objective(online, target, va, vb, sup, TINY, HybridLossConfig(0.0, 1.0))
    for k in ("pred.fc1.w", "pred.fc1.b", "pred.fc2.w", "pred.fc2.b"):
        assert np.all(grads[k] == 0.0)
    assert any(np.any(grads[k] != 0) for k in grads if k.startswith("proj."))


def test_sup_only_stationary_point():
    online, target, va, vb, _, _ = tiny_problem(4)
    # both views identical so one supervision target can match both projections exactly
    out = forward_online(online, va, TINY)
    parts, grads, _ = hybrid_objective(online, target, va, va, out.projection, TINY, HybridLossConfig(0.0, 1.0))
    assert parts.l_sup == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


def test_gradients_match_finite_differences():
    errs = finite_difference_errors(n_params=100, seed=5)
    assert errs.max() < 1e-4


def test_target_untouched_by_backward():
    online, target, va, vb, sup, lc = tiny_problem(6)
    before = {k: v.copy() for k, v in target.items()}
    _, grads, _ = hybrid_objective(online, target, va, vb, sup, TINY, lc)
    Adam().step(online, grads)
    assert all(np.array_equal(before[k], target[k]) for k in target)


# ------------------------------------------------------------------ optimiser and EMA

def test_adam_single_step_closed_form():
    p = {"w": np.array([0.7])}
    g = {"w": np.array([0.25])}
    opt = Adam(lr=1e-3)
    opt.step(p, g)
    m = (1 - 0.9) * 0.25
    v = (1 - 0.999) * 0.25 ** 2
    want = 0.7 - 1e-3 * (m / (1 - 0.9)) / (math.sqrt(v / (1 - 0.999)) + 1e-8)
    assert p["w"][0] == pytest.approx(want, abs=1e-15)


def test_adam_non_finite_aborts():
    p = {"w": np.array([1.0])}
    opt = Adam()
    with pytest.raises(NumericalError):
        opt.step(p, {"w": np.array([np.nan])})
    assert p["w"][0] == 1.0 and opt.t == 0


def test_ema_examples():
    t, o = {"a": np.array([2.0])}, {"a": np.array([0.0])}
    ema_update(t, o, 0.75)
    assert t["a"][0] == 1.5
    t2 = {"a": np.array([2.0])}
    ema_update(t2, o, 1.0)
    assert t2["a"][0] == 2.0
    ema_update(t2, o, 0.0)
    assert t2["a"][0] == 0.0
    with pytest.raises(ValueError):
        ema_update(t2, o, 1.5)


def test_ema_affine(rng):
    online = {"a": rng.normal(size=20)}
    target = {"a": rng.normal(size=20)}
    t0 = target["a"].copy()
    tau = 0.9
    ema_update(target, online, tau)
    ema_update(target, online, tau)
    once = {"a": t0.copy()}
    ema_update(once, online, tau * tau)
    np.testing.assert_allclose(target["a"], once["a"], rtol=0, atol=1e-14)


# ------------------------------------------------------------------ checkpoint container

def test_checkpoint_round_trip(tmp_path):
    p = _params(9)
    sha = save_checkpoint(tmp_path / "c.ckpt", p, {"hello": [1, 2]})
    q, cfg, sha2 = load_checkpoint(tmp_path / "c.ckpt")
    assert sha == sha2 and cfg == {"hello": [1, 2]}
    assert list(q) == list(p)
    assert all(np.array_equal(p[k], q[k]) and q[k].dtype == np.float32 for k in p)
    x = _x()
    assert np.array_equal(forward_online(p, x, TINY).prediction, forward_online(q, x, TINY).prediction)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    save_checkpoint(tmp_path / "ok.ckpt", _params(), {})
    data = (tmp_path / "ok.ckpt").read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(data[:-50])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "cut.ckpt")
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "f64.ckpt", {"w": np.zeros(2)}, {})
