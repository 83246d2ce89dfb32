import pytest
import yaml

from stressrep.config import RunConfig, load_config, resolve
from stressrep.errors import ConfigError


def test_defaults():
    cfg = resolve()
    assert cfg == RunConfig()
    assert cfg.training.alpha_ss == 1.0 and cfg.training.alpha_sup == 1.0 and cfg.training.tau == 0.99
    assert cfg.evaluation.mode == "per-partition" and cfg.evaluation.folds == 5
    assert cfg.frontend.mel_bins == 64


def test_file_and_override_precedence(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("training:\n  steps: 40\n  alpha_sup: 0.5\nevaluation:\n  mode: train-fit\n")
    cfg = load_config(p, {"training": {"steps": 3}})
    assert cfg.training.steps == 3
    assert cfg.training.alpha_sup == 0.5
    assert cfg.evaluation.mode == "train-fit"


@pytest.mark.parametrize("text", [
    "trainingg:\n  steps: 3\n",
    "training:\n  stepz: 3\n",
    "training:\n  steps: many\n",
    "training:\n  steps: 0\n",
    "augmentation:\n  mixup: 1\n",
    "model:\n  channels: 16\n",
    "- just\n- a list\n",
    "training: [1, 2\n",
])
def test_rejects_bad_config(tmp_path, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_yaml_echo_round_trip():
    cfg = resolve(None, {"training": {"seed": 5}, "model": {"channels": [8, 16]}})
    assert resolve(yaml.safe_load(cfg.to_yaml())) == cfg
    assert cfg.model.channels == (8, 16)


def test_int_accepted_for_float():
    assert resolve({"training": {"lr": 1}}).training.lr == 1.0
