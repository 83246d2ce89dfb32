"""Synthetic two-condition (load / no-load) corpus with per-speaker voices.

Each utterance is a harmonic source following a drifting, jittered F0
contour, amplitude-modulated at a syllable rate, spectrally tilted and mixed
with white noise. The load condition raises F0, jitter, syllable rate and
noise level by the factors in :class:`LoadEffect`.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .frontend import CANONICAL_SR, Waveform, write_wav
from .manifest import Manifest, Record, write_manifest

PEAK = 0.9
# per-speaker sampling ranges
F0_RANGE = (90.0, 220.0)
TILT_RANGE = (0.8, 1.6)
RATE_RANGE = (3.0, 5.0)
JITTER_RANGE = (0.0, 0.04)
SNR_RANGE = (18.0, 26.0)


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    gender: str
    base_f0: float
    tilt: float
    syllable_rate: float
    jitter: float
    snr_db: float


@dataclass(frozen=True)
class LoadEffect:
    f0_gain: float = 1.15
    jitter_add: float = 0.02
    rate_gain: float = 1.2
    noise_gain_db: float = 6.0

    def __post_init__(self):
        if min(self.f0_gain, self.rate_gain) <= 0 or self.jitter_add < 0:
            raise ValueError("load effect gains must be positive")


def gen_speaker_profile(seed: int, index: int) -> SpeakerProfile:
    rng = np.random.default_rng([seed, index, 0x5EA])
    return SpeakerProfile(
        speaker_id=f"spk{index:03d}",
        gender="F" if index % 2 == 0 else "M",
        base_f0=float(rng.uniform(*F0_RANGE)),
        tilt=float(rng.uniform(*TILT_RANGE)),
        syllable_rate=float(rng.uniform(*RATE_RANGE)),
        jitter=float(rng.uniform(*JITTER_RANGE)),
        snr_db=float(rng.uniform(*SNR_RANGE)),
    )


def _cycle_phase(f0_of_t, jitter: float, n: int, sr: int, rng) -> np.ndarray:
    """Phase in cycles at each sample for a jittered pulse train."""
    dur = n / sr
    times = [0.0]
    while times[-1] <= dur:
        t = times[-1]
        period = 1.0 / f0_of_t(t)
        if jitter > 0:
            period *= float(np.clip(1.0 + jitter * rng.standard_normal(), 0.5, 1.5))
        times.append(t + period)
    times = np.asarray(times)
    return np.interp(np.arange(n) / sr, times, np.arange(len(times), dtype=np.float64))


def gen_utterance(profile: SpeakerProfile, condition: str, duration: float, rng,
                  effect: LoadEffect = LoadEffect(), noise: bool = True,
                  sample_rate: int = CANONICAL_SR) -> Waveform:
    if not 0.5 <= duration <= 15.0:
        raise ValueError(f"duration must lie in [0.5, 15] s, got {duration}")
    if condition not in ("load", "no_load"):
        raise ValueError(f"unknown condition {condition!r}")
    load = condition == "load"
    f0 = profile.base_f0 * (effect.f0_gain if load else 1.0)
    jitter = profile.jitter + (effect.jitter_add if load else 0.0)
    rate = profile.syllable_rate * (effect.rate_gain if load else 1.0)
    snr = profile.snr_db - (effect.noise_gain_db if load else 0.0)

    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    drift_rate = rng.uniform(0.2, 0.6)
    drift_phase = rng.uniform(0, 2 * np.pi)

    def f0_of_t(tt):
        return f0 * (1.0 + 0.02 * np.sin(2 * np.pi * drift_rate * tt + drift_phase))

    phase = _cycle_phase(f0_of_t, jitter, n, sample_rate, rng)
    n_harm = max(1, int(0.45 * sample_rate // (f0 * 1.05)))
    n_harm = min(n_harm, 40)
    source = np.zeros(n)
    for h in range(1, n_harm + 1):
        source += h ** (-profile.tilt) * np.sin(2 * np.pi * h * phase)
    source /= np.sqrt(np.mean(source ** 2))

    env = 0.5 * (1.0 - np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    env = env ** 1.5
    x = env * source
    if noise:
        sig_rms = np.sqrt(np.mean(x ** 2))
        x = x + sig_rms * 10.0 ** (-snr / 20.0) * rng.standard_normal(n)
    x *= PEAK / np.max(np.abs(x))
    return Waveform(x, sample_rate)


def gen_corpus(n_speakers: int, utts_per_condition: int, out_dir, seed: int,
               durations=(1.0, 3.0), effect: LoadEffect = LoadEffect()) -> Manifest:
    """Write a balanced corpus of 16-bit WAVs and ``manifest.csv`` under out_dir."""
    if n_speakers < 4:
        raise DataError("need at least 4 speakers")
    wav_dir = os.path.join(out_dir, "wav")
    try:
        os.makedirs(wav_dir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {wav_dir}: {exc}") from exc
    records = []
    for i in range(n_speakers):
        prof = gen_speaker_profile(seed, i)
        for ci, cond in enumerate(("no_load", "load")):
            for u in range(utts_per_condition):
                rng = np.random.default_rng([seed, i, ci, u])
                dur = float(np.round(rng.uniform(*durations), 3))
                w = gen_utterance(prof, cond, dur, rng, effect)
                uid = f"{prof.speaker_id}_{cond}_{u:02d}"
                rel = os.path.join("wav", f"{uid}.wav")
                write_wav(os.path.join(out_dir, rel), w)
                records.append(Record(uid, rel, prof.speaker_id, prof.gender, cond, dur))
    m = Manifest(records, root=os.path.abspath(out_dir))
    write_manifest(os.path.join(out_dir, "manifest.csv"), m)
    return m
