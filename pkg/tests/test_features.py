import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tone
from stressrep.errors import DataError, SchemaMismatchError, SignalTooShortError
from stressrep.features import (DESCRIPTORS, FEATURE_NAMES, FUNCTIONALS, N_FEATURES, PITCH_DESCRIPTORS,
                                SCHEMA_ID, LldMatrix, SupervisionVector, apply_functionals, extract_features,
                                extract_lld, fit_standardizer, read_feature_csv, standardize,
                                write_feature_csv)
from stressrep.frontend import Waveform

COL = {d: i for i, d in enumerate(DESCRIPTORS)}


def oracle_percentile(values, q):
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def oracle_functionals(values):
    values = [float(v) for v in values]
    if not values:
        return [0.0] * 5
    return [statistics.fmean(values), statistics.pstdev(values),
            oracle_percentile(values, 0.2), oracle_percentile(values, 0.5), oracle_percentile(values, 0.8)]


def test_schema_layout():
    assert len(DESCRIPTORS) == 23
    assert N_FEATURES == 115 == len(FEATURE_NAMES)
    assert FEATURE_NAMES[:5] == tuple(f"f0.{f}" for f in FUNCTIONALS)
    assert FEATURE_NAMES[5] == "voicing_prob.mean"
    assert SCHEMA_ID == "CPS-115"


def test_sine_220_median_f0():
    lld = extract_lld(tone(220.0, 1.0))
    f0 = lld.values[lld.voiced_mask, COL["f0"]]
    assert lld.voiced_mask.mean() > 0.9
    assert abs(np.median(f0) - 220.0) <= 0.02 * 220.0


def test_silence():
    lld = extract_lld(Waveform(np.zeros(16000), 16000))
    assert not lld.voiced_mask.any()
    assert np.all(lld.values[:, COL["rms_db"]] == -100.0)
    assert np.all(lld.values[:, COL["zcr"]] == 0.0)
    assert np.all(np.isfinite(lld.values))
    v = apply_functionals(lld).values
    for d in PITCH_DESCRIPTORS:
        assert np.all(v[5 * COL[d]:5 * COL[d] + 5] == 0.0)


@pytest.mark.parametrize("f0", [110.0, 220.0, 330.0])
def test_sine_jitter_shimmer(f0):
    lld = extract_lld(tone(f0, 1.0, amp=0.8))
    vm = lld.voiced_mask
    assert np.median(lld.values[vm, COL["jitter_local"]]) < 0.005
    assert np.median(lld.values[vm, COL["shimmer_local"]]) < 0.005


@pytest.mark.parametrize("f0", [80.0, 100.0, 150.0, 200.0, 260.0, 330.0, 400.0])
def test_f0_accuracy(f0):
    lld = extract_lld(tone(f0, 0.8, amp=0.5))
    est = np.median(lld.values[lld.voiced_mask, COL["f0"]])
    assert abs(est - f0) <= 0.02 * f0


@settings(max_examples=25, deadline=None)
@given(f0=st.floats(80.0, 400.0), amp=st.floats(0.05, 1.0), phase=st.floats(0, 6.2))
def test_halving_amplitude(f0, amp, phase):
    a = extract_lld(tone(f0, 0.5, amp=amp, phase=phase))
    b = extract_lld(tone(f0, 0.5, amp=amp / 2, phase=phase))
    d_rms = np.median(b.values[:, COL["rms_db"]] - a.values[:, COL["rms_db"]])
    assert abs(d_rms - (-6.02)) <= 0.1
    fa = np.median(a.values[a.voiced_mask, COL["f0"]])
    fb = np.median(b.values[b.voiced_mask, COL["f0"]])
    assert abs(fb - fa) <= 0.01 * fa


def test_extraction_deterministic(rng):
    w = Waveform(0.3 * rng.standard_normal(8000) + np.asarray(tone(180, 0.5).samples) * 0.5, 16000)
    assert np.array_equal(extract_features(w).values, extract_features(w).values)


def test_other_rates_resampled():
    v8 = extract_lld(tone(200.0, 0.5, sr=8000, amp=0.5))
    f0 = np.median(v8.values[v8.voiced_mask, COL["f0"]])
    assert abs(f0 - 200.0) <= 4.0


def test_too_short():
    with pytest.raises(SignalTooShortError):
        extract_lld(Waveform(np.zeros(1500), 16000))


# ------------------------------------------------------------------ functionals

def _lld_from_column(col, voiced=None):
    t = len(col)
    vals = np.tile(np.asarray(col, dtype=np.float64)[:, None], (1, 23))
    mask = np.ones(t, bool) if voiced is None else voiced
    return LldMatrix(vals, mask)


def test_constant_contour():
    v = apply_functionals(_lld_from_column([2.5] * 7)).values.reshape(23, 5)
    assert np.all(v[:, 0] == 2.5)
    assert np.all(v[:, 1] == 0.0)
    assert np.all(v[:, 2:] == 2.5)


def test_one_to_five():
    v = apply_functionals(_lld_from_column([1, 2, 3, 4, 5])).values.reshape(23, 5)
    assert np.all(v[:, 0] == 3.0)
    assert np.all(v[:, 3] == 3.0)


def test_functionals_against_oracle_1000_contours():
    g = np.random.default_rng(99)
    pitch_cols = [COL[d] for d in PITCH_DESCRIPTORS]
    for _ in range(1000):
        t = int(g.integers(1, 60))
        vals = g.normal(0, 1, (t, 23)) * g.uniform(0.1, 100, 23) + g.uniform(-50, 50, 23)
        mask = g.random(t) < g.uniform(0, 1)
        got = apply_functionals(LldMatrix(vals, mask)).values.reshape(23, 5)
        for j in range(23):
            col = vals[mask, j] if j in pitch_cols else vals[:, j]
            exp = oracle_functionals(col.tolist())
            assert got[j, 0] == exp[0]
            assert got[j, 2] == exp[2] and got[j, 3] == exp[3] and got[j, 4] == exp[4]
            assert abs(got[j, 1] - exp[1]) <= 1e-12 * max(1.0, abs(exp[1]))


def test_functionals_empty_frames():
    with pytest.raises(DataError):
        apply_functionals(LldMatrix(np.zeros((0, 23)), np.zeros(0, bool)))


# ------------------------------------------------------------------ standardizer

def test_fit_two_vectors():
    s = fit_standardizer([SupervisionVector(np.zeros(115)), SupervisionVector(np.full(115, 2.0))])
    assert np.all(s.mean == 1.0) and np.all(s.std == 1.0)


def test_fit_identical_vectors_clamped():
    v = SupervisionVector(np.full(115, 3.0))
    s = fit_standardizer([v, v, v])
    assert np.all(s.std == 1e-8)


def test_fit_needs_two():
    with pytest.raises(DataError):
        fit_standardizer([SupervisionVector(np.zeros(115))])


def test_standardized_fit_set_moments(rng):
    X = rng.normal(5, 3, (40, 115)) * rng.uniform(0.01, 100, 115)
    X[:, 7] = 4.0  # degenerate dimension
    s = fit_standardizer([SupervisionVector(x) for x in X])
    Z = np.stack([standardize(SupervisionVector(x), s).values for x in X])
    live = np.arange(115) != 7
    assert np.all(np.abs(Z.mean(axis=0)) <= 1e-9)
    assert np.all(np.abs(Z.std(axis=0)[live] - 1.0) <= 1e-6)


def test_standardize_examples(rng):
    s = fit_standardizer([SupervisionVector(x) for x in rng.normal(0, 2, (10, 115))])
    assert np.allclose(standardize(SupervisionVector(s.mean.copy()), s).values, 0.0, atol=0)
    np.testing.assert_allclose(standardize(SupervisionVector(s.mean + s.std), s).values, 1.0, rtol=0, atol=1e-12)
    v = SupervisionVector(rng.normal(0, 5, 115))
    np.testing.assert_allclose(s.inverse(standardize(v, s)).values, v.values, rtol=0, atol=1e-12)


def test_standardize_schema_mismatch(rng):
    s = fit_standardizer([SupervisionVector(x) for x in rng.normal(0, 1, (4, 115))])
    with pytest.raises(SchemaMismatchError):
        standardize(SupervisionVector(np.zeros(115), "OTHER-9"), s)


# ------------------------------------------------------------------ csv dump

def test_feature_csv_round_trip(tmp_path, rng):
    X = rng.normal(0, 1e3, (5, 115))
    ids = [f"u{i}" for i in range(5)]
    p = tmp_path / "f.csv"
    write_feature_csv(p, ids, X)
    lines = p.read_text().splitlines()
    assert lines[0] == "# schema_id=CPS-115"
    assert lines[1].split(",") == ["utterance_id", *FEATURE_NAMES]
    sid, names, ids2, X2 = read_feature_csv(p)
    assert sid == SCHEMA_ID and ids2 == ids and tuple(names) == FEATURE_NAMES
    assert np.array_equal(X, X2)
