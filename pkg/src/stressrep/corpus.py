"""Batch processing of a manifest: decoding, log-mel and handcrafted features."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from .errors import DataError, StressRepError
from .features import extract_features
from .frontend import FrontendConfig, load_wav, waveform_to_logmel
from .manifest import Manifest


def worker_count() -> int:
    """Workers allowed by STRESSREP_THREADS (default: 1)."""
    raw = os.environ.get("STRESSREP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"STRESSREP_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


def _lms_job(args):
    uid, path, cfg_dict = args
    try:
        return waveform_to_logmel(load_wav(path), FrontendConfig(**cfg_dict)).values.astype(np.float32)
    except (StressRepError, OSError) as exc:
        raise DataError(f"utterance {uid!r}: {exc}") from exc


def _feat_job(args):
    uid, path = args
    try:
        return extract_features(load_wav(path)).values
    except (StressRepError, OSError) as exc:
        raise DataError(f"utterance {uid!r}: {exc}") from exc


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=8))


def manifest_logmels(m: Manifest, cfg: FrontendConfig = FrontendConfig(), workers: int | None = None):
    """Full-length log-mel spectrograms (float32, frames x mel) in manifest order."""
    jobs = [(r.utterance_id, m.resolve(r), asdict(cfg)) for r in m]
    return _map(_lms_job, jobs, worker_count() if workers is None else workers)


def manifest_features(m: Manifest, workers: int | None = None) -> np.ndarray:
    """CPS-115 vectors stacked in manifest order, shape (N, 115)."""
    jobs = [(r.utterance_id, m.resolve(r)) for r in m]
    rows = _map(_feat_job, jobs, worker_count() if workers is None else workers)
    return np.stack(rows) if rows else np.empty((0, 0))
