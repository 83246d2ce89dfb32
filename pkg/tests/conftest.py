import numpy as np
import pytest

from stressrep.frontend import Waveform


def tone(freq, seconds=1.0, sr=16000, amp=1.0, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The default synthetic corpus (20 speakers x 10 utterances/condition, seed 7) and its features,
    both produced through the command line."""
    import time
    from stressrep.cli import main
    t0 = time.perf_counter()
    root = tmp_path_factory.mktemp("default")
    corpus = root / "corpus"
    assert main(["corpus", "synth", "--speakers", "20", "--utts", "10", "--seed", "7", "--out", str(corpus)]) == 0
    feats = root / "features.csv"
    assert main(["features", "extract", "--manifest", str(corpus / "manifest.csv"), "--out", str(feats)]) == 0
    return {"root": root, "corpus": corpus, "manifest": corpus / "manifest.csv", "features": feats,
            "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    from stressrep.cli import main
    root = tmp_path_factory.mktemp("small")
    assert main(["corpus", "synth", "--speakers", "6", "--utts", "3", "--seed", "1", "--out", str(root / "c")]) == 0
    return root / "c"


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
