"""Hybrid self-supervised pretraining loop.

Every step draws a batch of utterances, takes a random fixed-length crop of
each log-mel spectrogram, builds two augmented views, and minimises

    l_hybrid = alpha_ss * l_ss + alpha_sup * l_sup

where l_ss is the symmetrised BYOL loss between online predictions and
target projections, and l_sup is the MSE between online projections and the
standardised handcrafted features of the whole (un-augmented) utterance.
One Adam step on the online network is followed by one EMA update of the
target.

Randomness comes from three independent streams seeded from ``seed``: batch
order, crop positions and augmentations. Toggling augmentations therefore
never changes which utterances are drawn.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .augment import AugmentConfig, MixupMemory, corpus_stats, make_views, pre_normalize
from .checkpoint import atomic_write_bytes, load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError, DataError, NumericalError
from .frontend import FrontendConfig, num_frames
from .nn import (Adam, HybridLossConfig, LossParts, NetConfig, copy_target, ema_update, embed,
                 hybrid_objective, init_params)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "l_ss", "l_sup", "l_hybrid", "tau")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    batch_size: int = 16
    tau: float = 0.99
    alpha_ss: float = 1.0
    alpha_sup: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    crop_seconds: float = 1.0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        HybridLossConfig(self.alpha_ss, self.alpha_sup)

    @property
    def loss(self) -> HybridLossConfig:
        return HybridLossConfig(self.alpha_ss, self.alpha_sup)


@dataclass
class ModelState:
    online: dict
    target: dict
    opt: Adam
    step: int = 0
    grad_norms: dict = field(default_factory=dict)


def new_state(net: NetConfig, cfg: TrainConfig, rng) -> ModelState:
    online = init_params(net, rng)
    return ModelState(online, copy_target(online), Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps))


def _group_norms(grads: dict) -> dict:
    out = {}
    for k, g in grads.items():
        grp = k.split(".")[0]
        out[grp] = out.get(grp, 0.0) + float(np.sum(g.astype(np.float64) ** 2))
    return {k: float(np.sqrt(v)) for k, v in out.items()}


def train_step(batch, state: ModelState, mem: MixupMemory, cfg: TrainConfig, net: NetConfig,
               aug: AugmentConfig, rng, stats=(0.0, 1.0), ids=None):
    """One optimisation step on ``batch``: a list of (log-mel crop, standardised features).

    Returns (state, LossParts). The state is updated in place.
    """
    if not batch:
        raise DataError("empty batch")
    views = [make_views(x, mem, aug, rng, stats) for x, _ in batch]
    va = np.stack([v.view_a for v in views]).astype(np.float32)
    vb = np.stack([v.view_b for v in views]).astype(np.float32)
    sup = np.stack([s for _, s in batch])
    parts, grads, _ = hybrid_objective(state.online, state.target, va, vb, sup, net, cfg.loss)
    if not np.isfinite(parts.l_hybrid):
        raise NumericalError(f"non-finite loss {parts} at step {state.step + 1}; batch: {ids}")
    try:
        state.opt.step(state.online, grads)
    except NumericalError as exc:
        raise NumericalError(f"{exc} (step {state.step + 1}; batch: {ids})") from exc
    ema_update(state.target, state.online, cfg.tau)
    state.step += 1
    state.grad_norms = _group_norms(grads)
    return state, parts


def reflect_pad(x: np.ndarray, frames: int) -> np.ndarray:
    """Extend along time by mirroring until at least ``frames`` long."""
    if x.shape[0] >= frames:
        return x
    if x.shape[0] == 1:
        return np.repeat(x, frames, axis=0)
    while x.shape[0] < frames:
        x = np.pad(x, ((0, min(frames - x.shape[0], x.shape[0] - 1)), (0, 0)), mode="reflect")
    return x


def _rng_from_state(state: dict):
    g = np.random.default_rng()
    g.bit_generator.state = state
    return g


class Pretrainer:
    """Owns the data, model state, mixup memory and random streams of one run."""

    def __init__(self, lms, sup, ids, cfg: TrainConfig = TrainConfig(),
                 frontend: FrontendConfig = FrontendConfig(), aug: AugmentConfig = AugmentConfig(),
                 net: NetConfig | None = None, norm_stats=None):
        if len(lms) == 0 or len(lms) != len(sup) or len(lms) != len(ids):
            raise DataError("lms, supervision vectors and ids must be non-empty and aligned")
        self.lms = list(lms)
        self.sup = np.asarray(sup, dtype=np.float32)
        self.ids = list(ids)
        self.cfg = cfg
        self.frontend = frontend
        self.aug = aug
        self.crop_frames = num_frames(int(round(cfg.crop_seconds * frontend.sample_rate)),
                                      frontend.frame_len, frontend.hop)
        mel = self.lms[0].shape[1]
        if net is None:
            net = NetConfig((self.crop_frames, mel), head=replace(NetConfig().head, out_dim=self.sup.shape[1]))
        if tuple(net.input_shape) != (self.crop_frames, mel):
            raise ConfigError(f"network input {net.input_shape} != crop shape {(self.crop_frames, mel)}")
        if net.head.out_dim != self.sup.shape[1]:
            raise ConfigError(f"head output {net.head.out_dim} != supervision dim {self.sup.shape[1]}")
        self.net = net
        self.norm_stats = tuple(norm_stats) if norm_stats is not None else corpus_stats(self.lms)

        init_ss, data_ss, crop_ss, aug_ss = np.random.SeedSequence(cfg.seed).spawn(4)
        self.state = new_state(net, cfg, np.random.default_rng(init_ss))
        self.data_rng = np.random.default_rng(data_ss)
        self.crop_rng = np.random.default_rng(crop_ss)
        self.aug_rng = np.random.default_rng(aug_ss)
        self.memory = MixupMemory(aug.memory_capacity)
        self.order = []
        self.pos = 0
        self.log_rows = []

    # -- data
    def next_indices(self):
        out = []
        while len(out) < self.cfg.batch_size:
            if self.pos >= len(self.order):
                self.order = self.data_rng.permutation(len(self.lms)).tolist()
                self.pos = 0
            out.append(self.order[self.pos])
            self.pos += 1
        return out

    def crop(self, x: np.ndarray) -> np.ndarray:
        x = reflect_pad(x, self.crop_frames)
        start = int(self.crop_rng.integers(0, x.shape[0] - self.crop_frames + 1))
        return x[start:start + self.crop_frames]

    # -- training
    def step(self) -> LossParts:
        idx = self.next_indices()
        batch = [(self.crop(self.lms[i]), self.sup[i]) for i in idx]
        _, parts = train_step(batch, self.state, self.memory, self.cfg, self.net, self.aug,
                              self.aug_rng, self.norm_stats, ids=[self.ids[i] for i in idx])
        self.log_rows.append((self.state.step, parts.l_ss, parts.l_sup, parts.l_hybrid, self.cfg.tau))
        return parts

    def run(self, steps: int | None = None, out_dir=None, callback=None) -> list:
        """Train until ``steps`` total steps (default cfg.steps), checkpointing into out_dir."""
        total = self.cfg.steps if steps is None else steps
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
        while self.state.step < total:
            parts = self.step()
            if callback is not None:
                callback(self.state.step, parts)
            every = self.cfg.checkpoint_every
            if out_dir is not None and every and self.state.step % every == 0 and self.state.step < total:
                self.save(os.path.join(out_dir, f"checkpoint_step{self.state.step:06d}.ckpt"))
        if out_dir is not None:
            self.save(os.path.join(out_dir, "checkpoint.ckpt"))
            write_train_log(os.path.join(out_dir, "train_log.csv"), self.log_rows)
        return self.log_rows

    # -- persistence
    def config_echo(self) -> dict:
        return {
            "kind": "stressrep-hybrid",
            "net": self.net.to_dict(),
            "frontend": asdict(self.frontend),
            "augment": asdict(self.aug),
            "train": asdict(self.cfg),
            "norm_stats": list(self.norm_stats),
        }

    def save(self, path) -> str:
        tensors = {f"online/{k}": v for k, v in self.state.online.items()}
        tensors.update({f"target/{k}": v for k, v in self.state.target.items()})
        tensors.update({f"adam.m/{k}": v for k, v in self.state.opt.m.items()})
        tensors.update({f"adam.v/{k}": v for k, v in self.state.opt.v.items()})
        tensors.update({f"memory/{i:05d}": np.asarray(x, dtype=np.float32)
                        for i, x in enumerate(self.memory.buffer)})
        cfg = self.config_echo()
        cfg["train_state"] = {
            "step": self.state.step,
            "adam_t": self.state.opt.t,
            "rng": {"data": self.data_rng.bit_generator.state, "crop": self.crop_rng.bit_generator.state,
                    "aug": self.aug_rng.bit_generator.state},
            "order": list(self.order),
            "pos": self.pos,
            "log": [list(r) for r in self.log_rows],
        }
        return save_checkpoint(path, tensors, cfg)

    def resume(self, path) -> None:
        """Restore model, optimiser, memory and random streams from a checkpoint."""
        tensors, cfg, _ = load_checkpoint(path)
        ts = cfg.get("train_state")
        if ts is None:
            raise CheckpointError(f"{path} carries no training state")
        if NetConfig.from_dict(cfg["net"]) != self.net:
            raise ConfigError("checkpoint network config differs from this run")

        def group(prefix):
            return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}

        self.state.online = group("online/")
        self.state.target = group("target/")
        self.state.opt.m = group("adam.m/")
        self.state.opt.v = group("adam.v/")
        self.state.opt.t = int(ts["adam_t"])
        self.state.step = int(ts["step"])
        mem = group("memory/")
        self.memory = MixupMemory(self.aug.memory_capacity)
        for k in sorted(mem):
            self.memory.buffer.append(mem[k])
        self.data_rng = _rng_from_state(ts["rng"]["data"])
        self.crop_rng = _rng_from_state(ts["rng"]["crop"])
        self.aug_rng = _rng_from_state(ts["rng"]["aug"])
        self.order = list(ts["order"])
        self.pos = int(ts["pos"])
        self.log_rows = [tuple(r) for r in ts["log"]]
        self.norm_stats = tuple(cfg["norm_stats"])


def write_train_log(path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for step, l_ss, l_sup, l_h, tau in rows:
        w.writerow([int(step), repr(float(l_ss)), repr(float(l_sup)), repr(float(l_h)), repr(float(tau))])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_train_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


# ------------------------------------------------------------------ frozen encoder

@dataclass
class LoadedModel:
    online: dict
    net: NetConfig
    frontend: FrontendConfig
    norm_stats: tuple
    checkpoint_id: str


def load_model(path) -> LoadedModel:
    tensors, cfg, sha = load_checkpoint(path)
    online = {k[len("online/"):]: v for k, v in tensors.items() if k.startswith("online/")}
    if not online:
        raise CheckpointError(f"{path} holds no online network")
    return LoadedModel(online, NetConfig.from_dict(cfg["net"]), FrontendConfig(**cfg["frontend"]),
                       tuple(cfg["norm_stats"]), sha)


def embed_logmels(online: dict, net: NetConfig, norm_stats, lms) -> np.ndarray:
    """Augmentation-free embeddings: corpus normalisation then the online encoder."""
    min_t = 2 ** len(net.encoder.channels)
    rows = []
    for x in lms:
        if x.shape[1] != net.input_shape[1]:
            raise ConfigError(f"log-mel has {x.shape[1]} bins but the encoder expects {net.input_shape[1]}")
        v = pre_normalize(reflect_pad(np.asarray(x, dtype=np.float32), min_t), norm_stats)
        rows.append(embed(online, v[None].astype(np.float32), net)[0])
    return np.stack(rows).astype(np.float32) if rows else np.empty((0, net.encoder.embed_dim), np.float32)


def embed_utterances(model: LoadedModel, lms, frontend: FrontendConfig | None = None) -> np.ndarray:
    """Embeddings for full-length log-mels computed with ``frontend``.

    Raises ConfigError when the frontend differs from the one the checkpoint
    was trained with.
    """
    if frontend is not None and frontend != model.frontend:
        raise ConfigError(f"frontend settings {frontend} differ from checkpoint {model.frontend}")
    return embed_logmels(model.online, model.net, model.norm_stats, lms)
