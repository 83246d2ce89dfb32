"""Two-view augmentation of log-mel spectrograms for BYOL-style training.

Each view goes through: corpus-level normalisation -> log-mixup-exp with a
memory of past inputs -> random resize crop -> per-view z-normalisation.
Arrays are (frames, mel_bins).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

POST_STD_EPS = 1e-8


@dataclass(frozen=True)
class AugmentConfig:
    mixup: bool = True
    mixup_alpha: float = 0.4
    memory_capacity: int = 2048
    resize_crop: bool = True
    time_scale: tuple = (0.6, 1.5)
    freq_scale: tuple = (0.6, 1.5)
    canvas_time: float = 1.5
    canvas_freq: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.mixup_alpha < 1.0:
            raise ValueError("mixup_alpha must lie in [0, 1)")
        if self.memory_capacity < 1:
            raise ValueError("memory_capacity must be >= 1")
        if self.canvas_time < 1.0 or self.canvas_freq < 1.0:
            raise ValueError("canvas scales must be >= 1")


@dataclass
class ViewPair:
    view_a: np.ndarray
    view_b: np.ndarray


class MixupMemory:
    """FIFO of past normalised inputs."""

    def __init__(self, capacity: int = 2048):
        self.capacity = capacity
        self.buffer = deque(maxlen=capacity)

    def __len__(self):
        return len(self.buffer)

    def push(self, x: np.ndarray) -> None:
        self.buffer.append(np.array(x, copy=True))


def corpus_stats(arrays) -> tuple[float, float]:
    """Scalar mean and std over every value of every array."""
    n = sum(a.size for a in arrays)
    mean = sum(float(np.sum(a, dtype=np.float64)) for a in arrays) / n
    var = sum(float(np.sum((a.astype(np.float64) - mean) ** 2)) for a in arrays) / n
    return mean, float(np.sqrt(var))


def pre_normalize(x: np.ndarray, stats) -> np.ndarray:
    mean, std = stats
    if std <= 0:
        raise ValueError("std must be positive")
    return (x - mean) / std


def post_normalize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / max(float(x.std()), POST_STD_EPS)


def mixup(x: np.ndarray, mem: MixupMemory, alpha: float, rng, lam: float | None = None) -> np.ndarray:
    """Blend x with a random past input in the linear (exp) domain.

    ``lam`` overrides the Uniform(0, alpha) draw. x is pushed to memory
    afterwards; with an empty memory the output is x itself.
    """
    out = x
    if len(mem):
        if lam is None:
            lam = rng.uniform(0.0, alpha)
        z = mem.buffer[int(rng.integers(len(mem)))]
        if z.shape == x.shape and lam > 0.0:
            with np.errstate(divide="ignore"):
                out = np.logaddexp(np.log1p(-lam) + x, np.log(lam) + z).astype(x.dtype, copy=False)
    mem.push(x)
    return out


def _resize_axis(x: np.ndarray, size: int, axis: int) -> np.ndarray:
    """Linear interpolation along one axis with pixel-centre alignment."""
    n = x.shape[axis]
    if n == size:
        return x
    src = (np.arange(size) + 0.5) * (n / size) - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = (src - i0).astype(x.dtype)
    shape = [1] * x.ndim
    shape[axis] = size
    frac = frac.reshape(shape)
    return np.take(x, i0, axis=axis) * (1 - frac) + np.take(x, i1, axis=axis) * frac


def bilinear_resize(x: np.ndarray, shape) -> np.ndarray:
    return _resize_axis(_resize_axis(x, shape[0], 0), shape[1], 1)


def random_resize_crop(x: np.ndarray, rng, cfg: AugmentConfig = AugmentConfig(),
                       scales=None, offsets=None) -> np.ndarray:
    """Crop from a zero-padded virtual canvas and resize back to x.shape.

    ``scales`` = (time, freq) and ``offsets`` = (time, freq) override the
    random draws; offsets are measured from the content origin, so (0, 0)
    with unit scales selects exactly the input.
    """
    t, m = x.shape
    ct, cm = int(t * cfg.canvas_time), int(m * cfg.canvas_freq)
    pt, pm = (ct - t) // 2, (cm - m) // 2
    if scales is None:
        scales = (rng.uniform(*cfg.time_scale), rng.uniform(*cfg.freq_scale))
    ht = int(np.clip(int(t * scales[0]), 1, ct))
    hm = int(np.clip(int(m * scales[1]), 1, cm))
    if offsets is None:
        ot = int(rng.integers(0, ct - ht + 1)) - pt
        om = int(rng.integers(0, cm - hm + 1)) - pm
    else:
        ot, om = offsets
    canvas = np.zeros((ct, cm), dtype=x.dtype)
    canvas[pt:pt + t, pm:pm + m] = x
    crop = canvas[ot + pt:ot + pt + ht, om + pm:om + pm + hm]
    return bilinear_resize(crop, (t, m))


def augment_view(x: np.ndarray, mem: MixupMemory, cfg: AugmentConfig, rng, stats) -> np.ndarray:
    v = pre_normalize(x, stats)
    if cfg.mixup:
        v = mixup(v, mem, cfg.mixup_alpha, rng)
    if cfg.resize_crop:
        v = random_resize_crop(v, rng, cfg)
    return post_normalize(v)


def make_views(x: np.ndarray, mem: MixupMemory, cfg: AugmentConfig, rng, stats=(0.0, 1.0)) -> ViewPair:
    """Two independently augmented views of one spectrogram."""
    a = augment_view(x, mem, cfg, rng, stats)
    b = augment_view(x, mem, cfg, rng, stats)
    return ViewPair(a, b)
