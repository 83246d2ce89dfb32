"""Downstream protocol: speaker-independent split, standardisation, linear SVM
with cross-validated penalty search, and unweighted average recall."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError
from .manifest import LABELS, Manifest
from .svm import train_svm

log = logging.getLogger(__name__)

C_GRID = tuple(10.0 ** k for k in range(-5, 6))
STD_EPS = 1e-8
MODES = ("per-partition", "train-fit")


@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset
    test: frozenset
    seed: int


@dataclass(frozen=True)
class EvalConfig:
    ratio: float = 0.7
    grid: tuple = C_GRID
    folds: int = 5
    seed: int = 0
    mode: str = "per-partition"
    svm_tol: float = 1e-4
    svm_max_iter: int = 2000


@dataclass
class EvalReport:
    uar: float
    recalls: dict
    confusion: list
    C: float
    fold_uars: dict
    cv_mean_uar: dict
    train_speakers: list
    test_speakers: list
    n_train: int
    n_test: int
    feature_dim: int
    config: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def table(self) -> str:
        lines = [f"test UAR      {self.uar:.4f}",
                 f"selected C    {self.C:g}",
                 f"train/test    {self.n_train}/{self.n_test} utterances, "
                 f"{len(self.train_speakers)}/{len(self.test_speakers)} speakers"]
        for lab in LABELS:
            lines.append(f"recall {lab:<8}{self.recalls[lab]:.4f}")
        lines.append("confusion (rows true, cols predicted; " + ", ".join(LABELS) + ")")
        lines.extend("  " + " ".join(f"{v:5d}" for v in row) for row in self.confusion)
        return "\n".join(lines)


# ---------------------------------------------------------------- metrics

def confusion_matrix(y_true, y_pred, n_classes: int = 2) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def uar(y_true, y_pred) -> float:
    """Mean recall over the classes present in y_true."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    classes = np.unique(y_true)
    if classes.size == 0:
        raise ValueError("y_true is empty")
    return float(np.mean([np.mean(y_pred[y_true == c] == c) for c in classes]))


def uar_from_confusion(cm) -> float:
    cm = np.asarray(cm)
    rows = cm.sum(axis=1)
    present = rows > 0
    return float(np.mean(np.diag(cm)[present] / rows[present]))


# ---------------------------------------------------------------- splitting

def _gender_gap(train_spk, test_spk, counts, genders) -> float:
    def dist(spks):
        tot = sum(counts[s] for s in spks)
        return {g: sum(counts[s] for s in spks if genders[s] == g) / tot for g in set(genders.values())}
    a, b = dist(train_spk), dist(test_spk)
    return max(abs(a[g] - b[g]) for g in a)


def split_speaker_independent(m: Manifest, ratio: float = 0.7, seed: int = 0,
                              n_candidates: int = 256, ratio_slack: float = 0.05) -> SplitAssignment:
    """Randomised greedy speaker split.

    Each candidate walks a random speaker order and puts a speaker in train
    while that keeps the train share of utterances near ``ratio``. Among
    candidates within ``ratio_slack`` of the best achievable share, the one
    with the smallest gender-proportion gap between partitions wins.
    """
    speakers = m.speakers
    if len(speakers) < 4:
        raise DataError(f"need at least 4 speakers for a split, got {len(speakers)}")
    counts = {s: 0 for s in speakers}
    genders = {}
    for r in m:
        counts[r.speaker] += 1
        genders.setdefault(r.speaker, r.gender)
    total = sum(counts.values())
    target = ratio * total
    rng = np.random.default_rng(seed)

    cands = []
    for _ in range(n_candidates):
        order = [speakers[i] for i in rng.permutation(len(speakers))]
        train, n_train = [], 0
        for s in order:
            if n_train + counts[s] <= target + counts[s] / 2.0:
                train.append(s)
                n_train += counts[s]
        test = [s for s in order if s not in train]
        if not train or not test:
            continue
        err = abs(n_train / total - ratio)
        cands.append((err, _gender_gap(train, test, counts, genders), len(cands), train, test))
    if not cands:
        raise DataError("could not build a non-empty train/test split")
    best_err = min(c[0] for c in cands)
    ok = [c for c in cands if c[0] <= best_err + ratio_slack]
    _, _, _, train, test = min(ok, key=lambda c: (round(c[1], 12), round(c[0], 12), c[2]))
    return SplitAssignment(frozenset(train), frozenset(test), seed)


def speaker_folds(speakers, counts: dict, folds: int = 5, seed: int = 0) -> list[frozenset]:
    """Speaker-disjoint folds balanced by utterance count."""
    speakers = sorted(speakers)
    if len(speakers) < folds:
        raise DataError(f"{len(speakers)} speakers cannot fill {folds} speaker-disjoint folds")
    rng = np.random.default_rng(seed)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    order.sort(key=lambda s: -counts[s])
    bins = [[] for _ in range(folds)]
    load = [0] * folds
    for s in order:
        k = int(np.argmin(load))
        bins[k].append(s)
        load[k] += counts[s]
    return [frozenset(b) for b in bins]


# ---------------------------------------------------------------- standardisation

def _zscore(x, mean, std):
    return (x - mean) / std


def _stats(x):
    std = x.std(axis=0)
    if np.any(std < STD_EPS):
        log.warning("%d zero-variance feature dimension(s) clamped to %g",
                    int(np.count_nonzero(std < STD_EPS)), STD_EPS)
    return x.mean(axis=0), np.maximum(std, STD_EPS)


def standardize_partitions(train, test, mode: str = "per-partition"):
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if train.shape[0] == 0 or test.shape[0] == 0:
        raise DataError("empty partition")
    if mode == "per-partition":
        return _zscore(train, *_stats(train)), _zscore(test, *_stats(test))
    if mode == "train-fit":
        mean, std = _stats(train)
        return _zscore(train, mean, std), _zscore(test, mean, std)
    raise ValueError(f"unknown standardization mode {mode!r}; expected one of {MODES}")


# ---------------------------------------------------------------- model selection

def select_C(X, y, groups, grid=C_GRID, folds: int = 5, seed: int = 0,
             svm_tol: float = 1e-4, svm_max_iter: int = 2000):
    """Pick the penalty maximising mean validation UAR over speaker-disjoint folds.

    Ties go to the smallest C. Returns (best C, {C: [fold UARs]}).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    groups = np.asarray(groups)
    grid = sorted(float(c) for c in grid)
    if len(grid) == 1:
        return grid[0], {}
    _, per_class = np.unique(y, return_counts=True)
    if per_class.size < 2 or per_class.min() < folds:
        raise DataError(f"need at least {folds} samples of each of two classes for {folds}-fold CV")
    counts = {g: int(np.count_nonzero(groups == g)) for g in np.unique(groups)}
    fold_sets = speaker_folds(counts.keys(), counts, folds, seed)
    masks = [np.isin(groups, list(f)) for f in fold_sets]

    scores = {}
    for C in grid:
        fold_scores = []
        for k, val in enumerate(masks):
            trn = ~val
            if np.unique(y[trn]).size < 2:
                raise DataError(f"fold {k} training data holds a single class")
            model = train_svm(X[trn], y[trn], C, svm_tol, svm_max_iter, seed=seed + k)
            fold_scores.append(uar(y[val], model.predict(X[val])))
        scores[C] = fold_scores
    best = max(grid, key=lambda c: (np.mean(scores[c]), -c))
    return best, scores


# ---------------------------------------------------------------- end to end

def evaluate(ids, features, m: Manifest, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Split, standardise, select C on train, refit, score UAR on test."""
    feats = dict(zip(ids, np.asarray(features, dtype=np.float64)))
    missing = [r.utterance_id for r in m if r.utterance_id not in feats]
    if missing:
        raise DataError(f"no features for {len(missing)} utterance(s), e.g. {missing[0]!r}")
    split = split_speaker_independent(m, cfg.ratio, cfg.seed)
    # sorting by id makes every number independent of manifest order
    recs = sorted(m.records, key=lambda r: r.utterance_id)
    tr = [r for r in recs if r.speaker in split.train]
    te = [r for r in recs if r.speaker in split.test]

    def arrays(rs):
        return (np.stack([feats[r.utterance_id] for r in rs]),
                np.array([LABELS.index(r.label) for r in rs]),
                np.array([r.speaker for r in rs]))

    Xtr, ytr, gtr = arrays(tr)
    Xte, yte, _ = arrays(te)
    if np.unique(ytr).size < 2:
        raise DataError("training partition holds a single class")
    Xtr, Xte = standardize_partitions(Xtr, Xte, cfg.mode)
    best_C, fold_scores = select_C(Xtr, ytr, gtr, cfg.grid, cfg.folds, cfg.seed,
                                   cfg.svm_tol, cfg.svm_max_iter)
    model = train_svm(Xtr, ytr, best_C, cfg.svm_tol, cfg.svm_max_iter, seed=cfg.seed)
    pred = model.predict(Xte)
    cm = confusion_matrix(yte, pred)
    rows = cm.sum(axis=1)
    recalls = {lab: (float(cm[k, k] / rows[k]) if rows[k] else 0.0) for k, lab in enumerate(LABELS)}
    return EvalReport(
        uar=uar_from_confusion(cm),
        recalls=recalls,
        confusion=cm.tolist(),
        C=best_C,
        fold_uars={repr(c): v for c, v in fold_scores.items()},
        cv_mean_uar={repr(c): float(np.mean(v)) for c, v in fold_scores.items()},
        train_speakers=sorted(split.train),
        test_speakers=sorted(split.test),
        n_train=len(tr),
        n_test=len(te),
        feature_dim=int(Xtr.shape[1]),
        config={"ratio": cfg.ratio, "grid": [float(c) for c in cfg.grid], "folds": cfg.folds,
                "seed": cfg.seed, "mode": cfg.mode, "svm_tol": cfg.svm_tol,
                "svm_max_iter": cfg.svm_max_iter},
        metadata={"cv_metric": "uar", "cv_folds": "speaker-disjoint",
                  "standardization": cfg.mode, "split_seed": split.seed},
    )
