"""Audio input, resampling, short-time spectra and log-mel spectrograms."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import get_window, resample_poly

from .errors import MalformedWavError, SignalTooShortError, UnsupportedWavError, WavNotFoundError

CANONICAL_SR = 16000
FLOOR_EPS = 1e-10

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram, shape (frames, n_fft // 2 + 1)."""

    bins: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int
    n_fft: int


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray  # (frames, mel_bins)
    mel_bins: int
    frame_params: tuple  # (frame_len, hop, fmin, fmax)


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = CANONICAL_SR
    frame_ms: float = 64.0
    hop_ms: float = 10.0
    mel_bins: int = 64
    fmin: float = 60.0
    fmax: float = 7800.0
    floor_eps: float = FLOOR_EPS

    @property
    def frame_len(self) -> int:
        return int(round(self.sample_rate * self.frame_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))


# --------------------------------------------------------------------------- WAV

def _read_chunks(data: bytes, path):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = body
        elif cid == b"data":
            if len(body) < size:
                raise MalformedWavError(
                    f"{path}: data chunk truncated ({len(body)} of {size} bytes present)")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise MalformedWavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedWavError(f"{path}: missing data chunk")
    return fmt, payload


def load_wav(path) -> Waveform:
    """Read a PCM-16 or float-32 WAV file as a mono waveform in [-1, 1].

    Stereo files are averaged across channels.
    """
    if not os.path.isfile(path):
        raise WavNotFoundError(f"no such WAV file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    fmt, payload = _read_chunks(data, path)
    tag, channels, sr, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        (tag,) = struct.unpack("<H", fmt[24:26])
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels not supported")
    if sr <= 0:
        raise MalformedWavError(f"{path}: invalid sample rate {sr}")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedWavError(f"{path}: format tag {tag} with {bits} bits not supported")
    if block_align != channels * dtype.itemsize:
        raise MalformedWavError(f"{path}: inconsistent block alignment {block_align}")
    if len(payload) % block_align:
        raise MalformedWavError(f"{path}: data chunk is not a whole number of frames")
    x = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    x = x.reshape(-1, channels).mean(axis=1)
    np.clip(x, -1.0, 1.0, out=x)
    return Waveform(x, int(sr))


def write_wav(path, w: Waveform) -> None:
    """Write 16-bit PCM mono. Samples are clipped to [-1, 1]."""
    pcm = np.round(np.clip(w.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, _WAVE_FORMAT_PCM, 1, w.sample_rate,
                         w.sample_rate * 2, 2, 16, b"data", len(payload))
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header + payload)
    os.replace(tmp, path)


# ------------------------------------------------------------------- resampling

def resample(w: Waveform, target_sr: int) -> Waveform:
    """Band-limited polyphase resampling (Kaiser-windowed sinc FIR)."""
    if target_sr <= 0:
        raise ValueError(f"target_sr must be positive, got {target_sr}")
    if target_sr == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    g = gcd(int(target_sr), int(w.sample_rate))
    up, down = int(target_sr) // g, int(w.sample_rate) // g
    y = resample_poly(np.asarray(w.samples, dtype=np.float64), up, down, window=("kaiser", 8.0))
    return Waveform(np.clip(y, -1.0, 1.0), int(target_sr))


# -------------------------------------------------------------------- spectra

def num_frames(n: int, frame_len: int, hop: int) -> int:
    return 1 + (n - frame_len) // hop


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Frames lying fully inside the signal, shape (T, frame_len). Returns a view."""
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if len(x) < frame_len:
        raise SignalTooShortError(f"signal of {len(x)} samples is shorter than one frame ({frame_len})")
    t = num_frames(len(x), frame_len, hop)
    return np.lib.stride_tricks.as_strided(
        x, shape=(t, frame_len), strides=(x.strides[0] * hop, x.strides[0]), writeable=False)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def stft(w: Waveform, frame_len: int, hop: int) -> Spectrogram:
    """Hann-windowed magnitude STFT; FFT size is the next power of two."""
    x = np.ascontiguousarray(w.samples, dtype=np.float64)
    frames = frame_signal(x, frame_len, hop)
    n_fft = _next_pow2(frame_len)
    win = get_window("hann", frame_len, fftbins=True)
    mag = np.abs(np.fft.rfft(frames * win, n=n_fft, axis=1))
    return Spectrogram(mag, frame_len, hop, w.sample_rate, n_fft)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, mel_bins: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (mel_bins, n_fft // 2 + 1)."""
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(f"invalid mel range [{fmin}, {fmax}] for sample rate {sample_rate}")
    if mel_bins < 1:
        raise ValueError("mel_bins must be >= 1")
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    # filters narrower than one FFT bin would be empty; give them their nearest bin
    empty = fb.sum(axis=1) <= 0
    if np.any(empty):
        nearest = np.abs(freqs[None, :] - mid[empty]).argmin(axis=1)
        fb[np.flatnonzero(empty), nearest] = 1.0
    return fb


def logmel(s: Spectrogram, mel_bins: int = 64, fmin: float = 60.0, fmax: float = 7800.0,
           floor_eps: float = FLOOR_EPS) -> LogMelSpectrogram:
    fb = mel_filterbank(s.sample_rate, s.n_fft, mel_bins, fmin, fmax)
    energy = (s.bins ** 2) @ fb.T
    values = np.log(np.maximum(energy, floor_eps))
    return LogMelSpectrogram(values, mel_bins, (s.frame_len, s.hop, float(fmin), float(fmax)))


def waveform_to_logmel(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> LogMelSpectrogram:
    """Full frontend path: resample to the configured rate, STFT, log-mel."""
    if w.sample_rate != cfg.sample_rate:
        w = resample(w, cfg.sample_rate)
    if len(w.samples) < cfg.frame_len:
        pad = cfg.frame_len - len(w.samples)
        w = Waveform(np.pad(w.samples, (0, pad)), w.sample_rate)
    spec = stft(w, cfg.frame_len, cfg.hop)
    return logmel(spec, cfg.mel_bins, cfg.fmin, cfg.fmax, cfg.floor_eps)
