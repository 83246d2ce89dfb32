"""Handcrafted acoustic features: frame-level descriptors and utterance functionals.

The schema ``CPS-115`` has 23 low-level descriptors computed every 10 ms over
40 ms frames, each summarised by 5 functionals (mean, std, p20, p50, p80),
giving 115 values ordered descriptor-major::

    f0.mean, f0.std, f0.p20, f0.p50, f0.p80, voicing_prob.mean, ...

Pitch-derived descriptors (f0, jitter, shimmer, HNR) are only defined on
voiced frames. They hold 0 on unvoiced frames and their functionals are taken
over voiced frames only.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.signal import butter, get_window, sosfiltfilt

from .errors import DataError, SchemaMismatchError, SignalTooShortError
from .frontend import CANONICAL_SR, Waveform, frame_signal, mel_filterbank, resample

SCHEMA_ID = "CPS-115"

DESCRIPTORS = (
    ["f0", "voicing_prob", "rms_db", "zcr", "spectral_centroid", "spectral_flux",
     "spectral_rolloff85"]
    + [f"mfcc{i}" for i in range(13)]
    + ["jitter_local", "shimmer_local", "hnr_db"]
)
FUNCTIONALS = ("mean", "std", "p20", "p50", "p80")
PITCH_DESCRIPTORS = ("f0", "jitter_local", "shimmer_local", "hnr_db")
FEATURE_NAMES = tuple(f"{d}.{f}" for d in DESCRIPTORS for f in FUNCTIONALS)
N_FEATURES = len(FEATURE_NAMES)

FRAME_LEN = 640  # 40 ms at 16 kHz: at least two periods of the lowest F0
HOP = 160
N_FFT = 1024
F0_MIN, F0_MAX = 60.0, 450.0
VOICING_THRESHOLD = 0.45
CLIP_RATIO = 0.3
RMS_FLOOR = 1e-5  # -100 dB
SILENCE_RMS = 1e-4
STD_EPS = 1e-8

_PITCH_IDX = [DESCRIPTORS.index(d) for d in PITCH_DESCRIPTORS]


@dataclass
class LldMatrix:
    values: np.ndarray  # (T, 23)
    voiced_mask: np.ndarray  # (T,) bool
    schema_id: str = SCHEMA_ID


@dataclass
class SupervisionVector:
    values: np.ndarray  # (115,)
    schema_id: str = SCHEMA_ID


@dataclass(frozen=True)
class FeatureStandardizer:
    mean: np.ndarray
    std: np.ndarray
    schema_id: str = SCHEMA_ID

    def inverse(self, v: SupervisionVector) -> SupervisionVector:
        return SupervisionVector(v.values * self.std + self.mean, v.schema_id)


# ------------------------------------------------------------------ pitch

def _nccf(frames: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    """Normalised cross-correlation between each frame and its lagged copy.

    Returns shape (T, lag_max + 2) with entries for lags 0..lag_max+1.
    """
    t, n = frames.shape
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(frames, nfft, axis=1)
    ac = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :lag_max + 2]
    csum = np.concatenate([np.zeros((t, 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(lag_max + 2)
    head = csum[:, n - lags]  # energy of x[0 : n-lag]
    tail = csum[:, -1:] - csum[:, lags]  # energy of x[lag : n]
    denom = np.sqrt(head * tail)
    out = np.zeros_like(ac)
    ok = denom > 1e-20
    out[ok] = ac[ok] / denom[ok]
    return out


def _parabolic(ym1, y0, yp1):
    """Vertex offset and height of the parabola through three equally spaced points."""
    den = ym1 - 2.0 * y0 + yp1
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(np.abs(den) > 1e-30, 0.5 * (ym1 - yp1) / den, 0.0)
    off = np.clip(off, -0.5, 0.5)
    return off, y0 - 0.25 * (ym1 - yp1) * off


def estimate_pitch(frames: np.ndarray, sample_rate: int):
    """Centre-clipped autocorrelation pitch tracker.

    Returns (f0 Hz, peak correlation of the clipped frame, correlation of the
    raw frame at the chosen lag). f0 is 0 where no peak was found.
    """
    lag_min = int(math.floor(sample_rate / F0_MAX))
    lag_max = int(math.ceil(sample_rate / F0_MIN))
    peak_abs = np.max(np.abs(frames), axis=1, keepdims=True)
    thr = CLIP_RATIO * peak_abs
    clipped = np.where(frames > thr, frames - thr, np.where(frames < -thr, frames + thr, 0.0))
    r_clip = _nccf(clipped, lag_min, lag_max)
    r_raw = _nccf(frames, lag_min, lag_max)

    t = frames.shape[0]
    f0 = np.zeros(t)
    strength = np.zeros(t)
    raw_at_peak = np.zeros(t)
    lags = np.arange(lag_min, lag_max + 1)
    for i in range(t):
        r = r_clip[i]
        seg = r[lag_min:lag_max + 1]
        is_peak = (seg > r[lag_min - 1:lag_max]) & (seg >= r[lag_min + 1:lag_max + 2])
        if not np.any(is_peak):
            continue
        cand = lags[is_peak]
        vals = r[cand]
        best = vals.max()
        if best <= 0:
            continue
        # first peak close to the global maximum avoids period-doubling errors
        lag = cand[np.argmax(vals >= 0.9 * best)]
        off, height = _parabolic(r[lag - 1], r[lag], r[lag + 1])
        f0[i] = sample_rate / (lag + off)
        strength[i] = min(max(height, 0.0), 1.0)
        rr = r_raw[i]
        _, raw_h = _parabolic(rr[lag - 1], rr[lag], rr[lag + 1])
        raw_at_peak[i] = raw_h
    return f0, strength, raw_at_peak


def cycle_marks(x: np.ndarray, start: int, stop: int, f0_at) -> tuple[np.ndarray, np.ndarray]:
    """Period-synchronous peak picking inside x[start:stop].

    ``f0_at(sample_index)`` gives the local F0. Returns fractional mark
    positions and the interpolated peak amplitude at each mark.
    """
    period = CANONICAL_SR / f0_at(start)
    hi = min(stop, start + int(math.ceil(period)))
    if hi - start < 3:
        return np.empty(0), np.empty(0)
    i = start + int(np.argmax(x[start:hi]))
    marks, amps = [], []
    while True:
        if 0 < i < len(x) - 1:
            off, amp = _parabolic(x[i - 1], x[i], x[i + 1])
        else:
            off, amp = 0.0, x[i]
        marks.append(i + float(off))
        amps.append(float(amp))
        period = CANONICAL_SR / f0_at(i)
        lo = i + int(round(0.75 * period))
        hi = i + int(round(1.25 * period)) + 1
        if hi > stop:
            break
        i = lo + int(np.argmax(x[lo:hi]))
    return np.asarray(marks), np.asarray(amps)


def _local_perturbation(values: np.ndarray) -> float:
    diffs = np.abs(np.diff(values))
    m = np.mean(np.abs(values))
    return float(np.mean(diffs) / m) if m > 0 else 0.0


def _jitter_shimmer(x, f0, voiced, hop, frame_len):
    t = len(f0)
    jitter = np.zeros(t)
    shimmer = np.zeros(t)
    centers = np.arange(t) * hop + frame_len / 2.0
    idx = np.flatnonzero(voiced)
    if idx.size == 0:
        return jitter, shimmer
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for run in runs:
        fc, ff = centers[run], f0[run]
        start = int(run[0] * hop)
        stop = int(run[-1] * hop + frame_len)
        # peaks of the band-limited waveform sit one per cycle; raw peaks can hop between ripples
        cutoff = min(1.5 * ff.max(), 0.45 * CANONICAL_SR)
        sos = butter(4, cutoff, btype="low", fs=CANONICAL_SR, output="sos")
        smooth = np.zeros_like(x)
        seg = x[start:stop]
        smooth[start:stop] = sosfiltfilt(sos, seg, padlen=min(len(seg) - 1, 3 * 13))
        marks, amps = cycle_marks(smooth, start, stop, lambda n: float(np.interp(n, fc, ff)))
        if marks.size < 3:
            continue
        periods = np.diff(marks)
        for fi in run:
            lo = fi * hop - hop
            hi = fi * hop + frame_len + hop
            sel = np.flatnonzero((marks >= lo) & (marks < hi))
            if sel.size < 3:
                continue
            jitter[fi] = _local_perturbation(periods[sel[0]:sel[-1]])
            shimmer[fi] = _local_perturbation(amps[sel])
    return jitter, shimmer


# ------------------------------------------------------------------ LLDs

def extract_lld(w: Waveform) -> LldMatrix:
    """Frame-level descriptors (T x 23) at a 10 ms hop."""
    if w.sample_rate != CANONICAL_SR:
        w = resample(w, CANONICAL_SR)
    x = np.ascontiguousarray(w.samples, dtype=np.float64)
    if len(x) < CANONICAL_SR // 10:
        raise SignalTooShortError(f"need at least 100 ms of audio, got {1000 * len(x) / CANONICAL_SR:.1f} ms")
    frames = frame_signal(x, FRAME_LEN, HOP)
    t = frames.shape[0]
    sr = CANONICAL_SR

    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    rms_db = 20.0 * np.log10(np.maximum(rms, RMS_FLOOR))
    zcr = np.count_nonzero(frames[:, :-1] * frames[:, 1:] < 0, axis=1) / (FRAME_LEN - 1)

    win = get_window("hann", FRAME_LEN, fftbins=True)
    mag = np.abs(np.fft.rfft(frames * win, N_FFT, axis=1))
    freqs = np.arange(mag.shape[1]) * sr / N_FFT
    msum = mag.sum(axis=1)
    safe = np.where(msum > 0, msum, 1.0)
    centroid = np.where(msum > 0, (mag @ freqs) / safe, 0.0)
    dist = mag / safe[:, None]
    flux = np.zeros(t)
    flux[1:] = np.sqrt(np.sum(np.diff(dist, axis=0) ** 2, axis=1))
    power = mag ** 2
    cum = np.cumsum(power, axis=1)
    total = cum[:, -1]
    roll_idx = np.argmax(cum >= 0.85 * total[:, None], axis=1)
    rolloff = np.where(total > 0, freqs[roll_idx], 0.0)

    fb = mel_filterbank(sr, N_FFT, 26, 20.0, sr / 2)
    logmel = np.log(np.maximum(power @ fb.T, 1e-10))
    mfcc = dct(logmel, type=2, norm="ortho", axis=1)[:, :13]

    f0, strength, raw_r = estimate_pitch(frames, sr)
    voiced = (strength >= VOICING_THRESHOLD) & (f0 > 0) & (rms > SILENCE_RMS)
    f0 = np.where(voiced, f0, 0.0)
    r = np.clip(raw_r, 1e-4, 1.0 - 1e-6)
    hnr = np.where(voiced, 10.0 * np.log10(r / (1.0 - r)), 0.0)
    jitter, shimmer = _jitter_shimmer(x, f0, voiced, HOP, FRAME_LEN)

    values = np.column_stack([f0, strength, rms_db, zcr, centroid, flux, rolloff, mfcc,
                              jitter, shimmer, hnr])
    return LldMatrix(values, voiced)


# ------------------------------------------------------------------ functionals

def percentile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation between closest ranks, rank = q * (n - 1)."""
    n = len(sorted_values)
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac)


def _functionals(contour: np.ndarray) -> list[float]:
    if contour.size == 0:
        return [0.0] * len(FUNCTIONALS)
    s = np.sort(contour)
    n = len(s)
    mean = math.fsum(s.tolist()) / n
    var = math.fsum(((s - mean) ** 2).tolist()) / n
    return [mean, math.sqrt(var), percentile(s, 0.2), percentile(s, 0.5), percentile(s, 0.8)]


def apply_functionals(lld: LldMatrix) -> SupervisionVector:
    if lld.values.shape[0] < 1:
        raise DataError("LLD matrix has no frames")
    out = []
    for j in range(lld.values.shape[1]):
        col = lld.values[:, j]
        if j in _PITCH_IDX:
            col = col[lld.voiced_mask]
        out.extend(_functionals(col))
    return SupervisionVector(np.asarray(out, dtype=np.float64), lld.schema_id)


def extract_features(w: Waveform) -> SupervisionVector:
    return apply_functionals(extract_lld(w))


# ------------------------------------------------------------------ standardisation

def fit_standardizer(vectors) -> FeatureStandardizer:
    vectors = list(vectors)
    if len(vectors) < 2:
        raise DataError("need at least 2 vectors to fit a standardizer")
    schemas = {v.schema_id for v in vectors}
    if len(schemas) != 1:
        raise SchemaMismatchError(f"mixed schemas: {sorted(schemas)}")
    x = np.stack([v.values for v in vectors])
    return FeatureStandardizer(x.mean(axis=0), np.maximum(x.std(axis=0), STD_EPS), schemas.pop())


def standardize(v: SupervisionVector, s: FeatureStandardizer) -> SupervisionVector:
    if v.schema_id != s.schema_id:
        raise SchemaMismatchError(f"vector schema {v.schema_id!r} != standardizer schema {s.schema_id!r}")
    return SupervisionVector((v.values - s.mean) / s.std, v.schema_id)


# ------------------------------------------------------------------ CSV dump

def write_feature_csv(path, ids, vectors, schema_id: str = SCHEMA_ID, names=FEATURE_NAMES) -> None:
    """One row per utterance; floats written with repr so reading back is lossless."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(f"# schema_id={schema_id}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utterance_id", *names])
        for uid, v in zip(ids, vectors):
            vals = v.values if isinstance(v, SupervisionVector) else v
            writer.writerow([uid, *(repr(float(a)) for a in vals)])
    os.replace(tmp, path)


def read_feature_csv(path):
    """Returns (schema_id, column names, utterance ids, matrix)."""
    schema_id = None
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            key, _, val = first[1:].strip().partition("=")
            if key.strip() == "schema_id":
                schema_id = val.strip()
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        ids, rows = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            rows.append([float(a) for a in row[1:]])
    if header[0] != "utterance_id":
        raise DataError(f"{path}: first column must be utterance_id")
    return schema_id, header[1:], ids, np.asarray(rows, dtype=np.float64).reshape(len(ids), len(header) - 1)
