"""Online/target networks with hand-written backward passes.

Layout is channels-last: a batch of log-mel inputs (B, T, M) becomes
(B, T, M, 1). Each encoder block is conv3x3 (same padding) -> per-sample
channel normalisation with learned scale/shift -> ReLU -> 2x2 max-pool.
The last feature map is averaged over time, flattened and mapped linearly to
the embedding. Projector and predictor are two-layer ReLU MLPs.

Parameters live in plain ``dict[str, ndarray]`` so that online, target,
gradients and optimiser moments all share one naming scheme.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericalError

log = logging.getLogger(__name__)

NORM_EPS = 1e-5
NORM_CLAMP = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    channels: tuple = (16, 32, 64)
    embed_dim: int = 128


@dataclass(frozen=True)
class HeadConfig:
    hidden: int = 256
    out_dim: int = 115


@dataclass(frozen=True)
class HybridLossConfig:
    alpha_ss: float = 1.0
    alpha_sup: float = 1.0

    def __post_init__(self):
        if self.alpha_ss < 0 or self.alpha_sup < 0 or self.alpha_ss + self.alpha_sup <= 0:
            raise ValueError("loss weights must be non-negative with a positive sum")


@dataclass(frozen=True)
class NetConfig:
    input_shape: tuple = (94, 64)  # (frames, mel bins)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        t, m = self.input_shape
        for k in range(len(self.encoder.channels)):
            t, m = t // 2, m // 2
            if t < 1 or m < 1:
                raise ValueError(f"input {self.input_shape} pools to nothing after block {k + 1}")

    @property
    def pooled_shape(self):
        t, m = self.input_shape
        for _ in self.encoder.channels:
            t, m = t // 2, m // 2
        return t, m

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["encoder"]["channels"] = list(self.encoder.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(tuple(d["input_shape"]),
                   EncoderConfig(tuple(d["encoder"]["channels"]), int(d["encoder"]["embed_dim"])),
                   HeadConfig(int(d["head"]["hidden"]), int(d["head"]["out_dim"])))


@dataclass(frozen=True)
class LossParts:
    l_ss: float
    l_sup: float
    l_hybrid: float


# ------------------------------------------------------------------ init

def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(cfg: NetConfig, rng, dtype=np.float32) -> dict:
    """Kaiming-uniform weights, zero biases, unit norm scales."""
    p = {}
    cin = 1
    for k, cout in enumerate(cfg.encoder.channels):
        # no conv bias: the channel normalisation right after subtracts it
        p[f"enc.conv{k}.w"] = _kaiming_uniform(rng, (3, 3, cin, cout), 9 * cin, dtype)
        p[f"enc.norm{k}.g"] = np.ones(cout, dtype)
        p[f"enc.norm{k}.b"] = np.zeros(cout, dtype)
        cin = cout
    flat = cfg.pooled_shape[1] * cin
    e, h, d = cfg.encoder.embed_dim, cfg.head.hidden, cfg.head.out_dim
    for name, fin, fout in (("enc.fc", flat, e), ("proj.fc1", e, h), ("proj.fc2", h, d),
                            ("pred.fc1", d, h), ("pred.fc2", h, d)):
        p[f"{name}.w"] = _kaiming_uniform(rng, (fin, fout), fin, dtype)
        p[f"{name}.b"] = np.zeros(fout, dtype)
    return p


def target_names(params: dict) -> list[str]:
    return [k for k in params if not k.startswith("pred.")]


def copy_target(online: dict) -> dict:
    return {k: online[k].copy() for k in target_names(online)}


# ------------------------------------------------------------------ layers

def conv3x3_forward(x, w):
    bsz, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.concatenate([xp[:, i:i + h, j:j + wd, :] for i in range(3) for j in range(3)], axis=-1)
    cols = cols.reshape(-1, 9 * c)
    out = cols @ w.reshape(9 * c, -1)
    return out.reshape(bsz, h, wd, -1), cols


def conv3x3_backward(dout, cols, x_shape, w):
    bsz, h, wd, c = x_shape
    cout = w.shape[-1]
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    dcols = (d2 @ w.reshape(9 * c, cout).T).reshape(bsz, h, wd, 9, c)
    dxp = np.zeros((bsz, h + 2, wd + 2, c), dtype=dout.dtype)
    k = 0
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd, :] += dcols[..., k, :]
            k += 1
    return dxp[:, 1:-1, 1:-1, :], dw


def chnorm_forward(x, g, b):
    """Normalise each channel of each sample over its spatial extent."""
    bsz, h, w, c = x.shape
    x3 = x.reshape(bsz, h * w, c)
    xc = x3 - x3.mean(axis=1, keepdims=True)
    var = np.einsum("bnc,bnc->bc", xc, xc)[:, None, :] / (h * w)
    inv = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = xc * inv
    return (xhat * g + b).reshape(x.shape), (xhat, inv)


def chnorm_backward(dy, cache, g):
    xhat, inv = cache
    n = xhat.shape[1]
    dy3 = dy.reshape(xhat.shape)
    dg = np.einsum("bnc,bnc->c", dy3, xhat)
    db = dy3.sum(axis=(0, 1))
    dxhat = dy3 * g
    s1 = dxhat.sum(axis=1, keepdims=True)
    s2 = np.einsum("bnc,bnc->bc", dxhat, xhat)[:, None, :]
    dx = (inv / n) * (n * dxhat - s1 - xhat * s2)
    return dx.reshape(dy.shape), dg, db


def maxpool_forward(x):
    """2x2 max-pool; odd trailing rows/columns are dropped."""
    h2, w2 = x.shape[1] // 2, x.shape[2] // 2
    q = [x[:, i:2 * h2:2, j:2 * w2:2, :] for i in (0, 1) for j in (0, 1)]
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    return out, out


def maxpool_backward(dout, out, x):
    """Route each gradient to the first maximal element of its window."""
    h2, w2 = out.shape[1], out.shape[2]
    dx = np.zeros(x.shape, dtype=dout.dtype)
    taken = np.zeros(out.shape, dtype=bool)
    for i in (0, 1):
        for j in (0, 1):
            hit = x[:, i:2 * h2:2, j:2 * w2:2, :] == out
            hit &= ~taken
            taken |= hit
            dx[:, i:2 * h2:2, j:2 * w2:2, :] = dout * hit
    return dx


# ------------------------------------------------------------------ networks

def encoder_forward(p: dict, x: np.ndarray, n_blocks: int, keep: bool = False):
    """x: (B, T, M). Returns the embedding (B, E) and a backward cache."""
    h = x[..., None]
    caches = []
    for k in range(n_blocks):
        conv, cols = conv3x3_forward(h, p[f"enc.conv{k}.w"])
        normed, ncache = chnorm_forward(conv, p[f"enc.norm{k}.g"], p[f"enc.norm{k}.b"])
        act = np.maximum(normed, 0)
        pooled, _ = maxpool_forward(act)
        if keep:
            caches.append((h.shape, cols, ncache, act, pooled))
        h = pooled
    t = h.shape[1]
    flat = h.mean(axis=1).reshape(h.shape[0], -1)
    emb = flat @ p["enc.fc.w"] + p["enc.fc.b"]
    return emb, ((caches, flat, h.shape, t) if keep else None)


def encoder_backward(p: dict, cache, demb: np.ndarray, grads: dict) -> None:
    caches, flat, pooled_shape, t = cache
    grads["enc.fc.w"] = flat.T @ demb
    grads["enc.fc.b"] = demb.sum(axis=0)
    dflat = demb @ p["enc.fc.w"].T
    bsz, _, m, c = pooled_shape
    dh = np.broadcast_to((dflat / t).reshape(bsz, 1, m, c), pooled_shape)
    for k in reversed(range(len(caches))):
        in_shape, cols, ncache, act, pooled = caches[k]
        dact = maxpool_backward(dh, pooled, act)
        dnorm = dact * (act > 0)
        dconv, grads[f"enc.norm{k}.g"], grads[f"enc.norm{k}.b"] = chnorm_backward(
            dnorm, ncache, p[f"enc.norm{k}.g"])
        dx, grads[f"enc.conv{k}.w"] = conv3x3_backward(
            dconv, cols, in_shape, p[f"enc.conv{k}.w"])
        dh = dx


def mlp_forward(p: dict, name: str, x: np.ndarray):
    pre = x @ p[f"{name}.fc1.w"] + p[f"{name}.fc1.b"]
    hid = np.maximum(pre, 0)
    out = hid @ p[f"{name}.fc2.w"] + p[f"{name}.fc2.b"]
    return out, (x, pre > 0, hid)


def mlp_backward(p: dict, name: str, cache, dout: np.ndarray, grads: dict) -> np.ndarray:
    x, mask, hid = cache
    grads[f"{name}.fc2.w"] = hid.T @ dout
    grads[f"{name}.fc2.b"] = dout.sum(axis=0)
    dpre = (dout @ p[f"{name}.fc2.w"].T) * mask
    grads[f"{name}.fc1.w"] = x.T @ dpre
    grads[f"{name}.fc1.b"] = dpre.sum(axis=0)
    return dpre @ p[f"{name}.fc1.w"].T


class OnlineForward:
    """Outputs and backward cache of one online pass."""

    def __init__(self, embedding, projection, prediction, cache):
        self.embedding = embedding
        self.projection = projection
        self.prediction = prediction
        self._cache = cache


def _check_input(cfg: NetConfig, x):
    if x.ndim != 3 or tuple(x.shape[1:]) != tuple(cfg.input_shape):
        raise ValueError(f"expected input of shape (B, {cfg.input_shape[0]}, {cfg.input_shape[1]}), "
                         f"got {x.shape}")


def forward_online(p: dict, x: np.ndarray, cfg: NetConfig, keep: bool = False) -> OnlineForward:
    """Encoder -> projector -> predictor on a batch (B, T, M)."""
    _check_input(cfg, x)
    x = x.astype(p["enc.fc.w"].dtype, copy=False)
    nb = len(cfg.encoder.channels)
    emb, ecache = encoder_forward(p, x, nb, keep)
    proj, pcache = mlp_forward(p, "proj", emb)
    pred, qcache = mlp_forward(p, "pred", proj)
    return OnlineForward(emb, proj, pred, (ecache, pcache, qcache) if keep else None)


def forward_target(p: dict, x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    """Encoder -> projector; no cache is kept so nothing can flow back."""
    _check_input(cfg, x)
    x = x.astype(p["enc.fc.w"].dtype, copy=False)
    emb, _ = encoder_forward(p, x, len(cfg.encoder.channels))
    proj, _ = mlp_forward(p, "proj", emb)
    return proj


def embed(p: dict, x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    """Encoder output for (B, T, M) inputs of any length T >= 2**blocks.

    Time is mean-pooled, so only the mel dimension has to match training.
    """
    min_t = 2 ** len(cfg.encoder.channels)
    if x.ndim != 3 or x.shape[2] != cfg.input_shape[1] or x.shape[1] < min_t:
        raise ValueError(f"expected input (B, T >= {min_t}, {cfg.input_shape[1]}), got {x.shape}")
    x = x.astype(p["enc.fc.w"].dtype, copy=False)
    return encoder_forward(p, x, len(cfg.encoder.channels))[0]


def backward_online(p: dict, out: OnlineForward, d_projection, d_prediction) -> dict:
    """Gradients of all online parameters given upstream gradients on both heads."""
    if out._cache is None:
        raise ValueError("forward pass was run without keep=True")
    ecache, pcache, qcache = out._cache
    grads = {}
    dproj = mlp_backward(p, "pred", qcache, d_prediction, grads)
    if d_projection is not None:
        dproj = dproj + d_projection
    demb = mlp_backward(p, "proj", pcache, dproj, grads)
    encoder_backward(p, ecache, demb, grads)
    return grads


# ------------------------------------------------------------------ losses

def byol_loss(pred, targ):
    """2 - 2 cos(pred, targ), row-wise for 2-D inputs."""
    pred = np.asarray(pred, dtype=np.float64)
    targ = np.asarray(targ, dtype=np.float64)
    pp = np.sum(pred * pred, axis=-1)
    tt = np.sum(targ * targ, axis=-1)
    floor = NORM_CLAMP * NORM_CLAMP
    if np.any(pp < floor) or np.any(tt < floor):
        log.warning("zero-norm vector in byol_loss; norm clamped at %g", NORM_CLAMP)
    # sqrt(s * s) == s in IEEE arithmetic, so parallel and antipodal inputs give cos of exactly +-1
    cos = np.sum(pred * targ, axis=-1) / np.sqrt(np.maximum(pp, floor) * np.maximum(tt, floor))
    out = 2.0 - 2.0 * np.clip(cos, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def byol_loss_grad(pred, targ):
    """d/d pred of 2 - 2 cos(pred, targ), row-wise."""
    pn = np.maximum(np.linalg.norm(pred, axis=-1, keepdims=True), NORM_CLAMP)
    tn = np.maximum(np.linalg.norm(targ, axis=-1, keepdims=True), NORM_CLAMP)
    ph, th = pred / pn, targ / tn
    cos = np.sum(ph * th, axis=-1, keepdims=True)
    return -2.0 / pn * (th - cos * ph)


def sup_loss(online_proj, target_features):
    """Mean squared error over the last axis."""
    a = np.asarray(online_proj, dtype=np.float64)
    b = np.asarray(target_features, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    out = np.mean((a - b) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def hybrid_loss(l_ss: float, l_sup: float, cfg: HybridLossConfig) -> LossParts:
    if l_ss < 0 or l_sup < 0:
        raise ValueError("loss parts must be non-negative")
    return LossParts(float(l_ss), float(l_sup), cfg.alpha_ss * float(l_ss) + cfg.alpha_sup * float(l_sup))


def hybrid_objective(online: dict, target: dict, view_a, view_b, sup_targets, cfg: NetConfig,
                     loss_cfg: HybridLossConfig, need_grads: bool = True):
    """Batch loss and online gradients for one pair of augmented views.

    The BYOL term averages (a -> b) and (b -> a) predictions against the
    target projections; the supervised term averages the MSE of both views'
    online projections against the same handcrafted target. Both are batch
    means, combined as alpha_ss * l_ss + alpha_sup * l_sup.
    """
    bsz = view_a.shape[0]
    x = np.concatenate([view_a, view_b], axis=0)
    out = forward_online(online, x, cfg, keep=need_grads)
    z = forward_target(target, x, cfg)
    z_swapped = np.concatenate([z[bsz:], z[:bsz]], axis=0)
    s = np.asarray(sup_targets, dtype=out.projection.dtype)
    s2 = np.concatenate([s, s], axis=0)

    ss_rows = byol_loss(out.prediction, z_swapped)
    sup_rows = sup_loss(out.projection, s2)
    l_ss = float(np.mean(ss_rows))
    l_sup = float(np.mean(sup_rows))
    parts = hybrid_loss(max(l_ss, 0.0), l_sup, loss_cfg)
    if not need_grads:
        return parts, None, out
    dtype = out.projection.dtype
    n = 2 * bsz  # each view row carries weight 1 / (2B)
    d_pred = (loss_cfg.alpha_ss / n) * byol_loss_grad(out.prediction, z_swapped)
    d_proj = (loss_cfg.alpha_sup / n) * 2.0 * (out.projection - s2) / s2.shape[1]
    grads = backward_online(online, out, d_proj.astype(dtype), d_pred.astype(dtype))
    return parts, grads, out


# ------------------------------------------------------------------ optimisation

@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        """In-place Adam update of every parameter that has a gradient."""
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NumericalError(f"non-finite gradient in {bad[:5]}; step aborted")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            p = params[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def ema_update(target: dict, online: dict, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for k, t in target.items():
        t *= tau
        t += (1.0 - tau) * online[k]
