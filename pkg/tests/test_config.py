import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest

from app.config.config_manager import RESOLVED_MANIFEST_NAME, ConfigManager, ExperimentManifest, write_template
from app.config.defaults import RUN_DEFAULTS
from app.config.run_config import (
    ParticipationSchedule, RunConfig, default_merge_radius, draw_initial_k, draw_participation_probs,
)
from app.core.errors import ConfigError

MANIFEST = """
trials = 3
seed = 7
output_dir = "out"

[dataset]
path = "data/points.csv"
label_col = "label"

[partitioning]
clients = 3

[run]
k_star = 4
eta = 0.1

[run.participation]
low = 0.3
"""


def _write(tmp_path, text: str, name: str = "manifest.toml") -> str:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# Run configuration types
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("probs", [(), (0.5, 0.0), (1.2,), (-0.1, 0.5)])
def test_schedule_rejects_bad_probabilities(probs):
    with pytest.raises(ConfigError):
        ParticipationSchedule(probs)


def test_run_config_defaults():
    config = RunConfig(k0=4, schedule=ParticipationSchedule((1.0, 0.5)))
    assert config.clients == 2
    assert config.eta == RUN_DEFAULTS["eta"]
    assert config.xi == RUN_DEFAULTS["xi"]
    assert config.resolved_merge_radius(4) == pytest.approx(0.02)
    assert config.with_changes(merge_radius=0.3).resolved_merge_radius(4) == 0.3


@pytest.mark.parametrize("changes", [
    {"k0": 0}, {"xi": 0.0}, {"eta": -1.0}, {"max_iter": -1}, {"conv_patience": 0},
    {"merge_radius": 0.0}, {"workers": 0}, {"conv_rel_tol": 0.0},
])
def test_run_config_validation(changes):
    fields = {"k0": 3, "schedule": ParticipationSchedule((1.0,))}
    fields.update(changes)
    with pytest.raises(ConfigError):
        RunConfig(**fields)


def test_default_merge_radius():
    assert default_merge_radius(2) == pytest.approx(0.01 * math.sqrt(2))


def test_draw_initial_k_range():
    rng = np.random.default_rng(0)
    draws = {draw_initial_k(4, rng) for _ in range(500)}
    assert draws == {4, 5, 6, 7, 8}


def test_draw_participation_probs():
    probs = draw_participation_probs(5, np.random.default_rng(1), 0.2, 1.0)
    assert len(probs) == 5
    assert all(0.2 <= p <= 1.0 for p in probs)
    assert len(set(probs)) == 5
    with pytest.raises(ConfigError):
        draw_participation_probs(3, np.random.default_rng(1), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------

def test_manifest_fills_defaults(tmp_path):
    m = ConfigManager(_write(tmp_path, MANIFEST)).manifest
    assert m.trials == 3 and m.seed == 7
    assert m.clients == 3
    assert m.output_dir == os.path.join(str(tmp_path), "out")
    assert m.dataset["path"] == os.path.join(str(tmp_path), "data", "points.csv")
    assert m.dataset["label_col"] == "label"
    assert m.run["k_star"] == 4
    assert m.run["eta"] == 0.1
    assert m.run["xi"] == RUN_DEFAULTS["xi"]
    assert m.run["participation"] == {"resample_empty": True, "low": 0.3, "high": 1.0}


def test_manifest_values_are_read_through_typed_fields(tmp_path):
    cfg = ConfigManager(_write(tmp_path, MANIFEST))
    assert isinstance(cfg.manifest, ExperimentManifest)
    assert not hasattr(cfg, "get")


def test_manifest_preset_dataset(tmp_path):
    text = MANIFEST.replace('path = "data/points.csv"\nlabel_col = "label"', 'preset = "sd2"')
    m = ConfigManager(_write(tmp_path, text)).manifest
    assert m.dataset["synth"]["blobs"] == 5
    assert m.dataset["synth"]["n"] == 2900
    assert m.dataset["synth"]["stddev"] == 0.5


def test_manifest_rejects_unknown_key(tmp_path):
    text = MANIFEST.replace("eta = 0.1", "eta = 0.1\nlearning_rate = 0.2")
    with pytest.raises(ConfigError, match="run.learning_rate"):
        ConfigManager(_write(tmp_path, text))


def test_manifest_rejects_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        ConfigManager(_write(tmp_path, MANIFEST + "\n[extras]\nfoo = 1\n"))


def test_manifest_needs_one_dataset_source(tmp_path):
    text = MANIFEST.replace('label_col = "label"', 'label_col = "label"\npreset = "sd1"')
    with pytest.raises(ConfigError, match="exactly one"):
        ConfigManager(_write(tmp_path, text))


def test_manifest_probs_must_match_clients(tmp_path):
    text = MANIFEST.replace("low = 0.3", "probs = [1.0, 0.5]")
    with pytest.raises(ConfigError, match="2 entries for 3"):
        ConfigManager(_write(tmp_path, text))


def test_manifest_needs_k(tmp_path):
    with pytest.raises(ConfigError, match="k0"):
        ConfigManager(_write(tmp_path, MANIFEST.replace("k_star = 4", "")))


def test_manifest_type_errors(tmp_path):
    with pytest.raises(ConfigError, match="trials"):
        ConfigManager(_write(tmp_path, MANIFEST.replace("trials = 3", "trials = 0")))
    with pytest.raises(ConfigError, match="balance"):
        ConfigManager(_write(tmp_path, MANIFEST.replace("eta = 0.1", 'balance = "yes"')))


def test_manifest_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="Cannot parse"):
        ConfigManager(_write(tmp_path, "trials = = 3"))
    with pytest.raises(ConfigError, match="not found"):
        ConfigManager(str(tmp_path / "missing.toml"))


def test_save_resolved_reloads(tmp_path):
    cfg = ConfigManager(_write(tmp_path, MANIFEST))
    path = cfg.save_resolved(str(tmp_path / "run"))
    assert os.path.basename(path) == RESOLVED_MANIFEST_NAME
    with open(path, "rb") as f:
        resolved = tomllib.load(f)
    assert resolved["run"]["eta"] == 0.1
    assert resolved["run"]["max_iter"] == RUN_DEFAULTS["max_iter"]
    assert resolved["output_dir"] == os.path.abspath(str(tmp_path / "run"))

    again = ConfigManager(path).manifest
    assert again.run == cfg.manifest.run
    assert again.dataset == cfg.manifest.dataset


def test_template_is_a_valid_manifest(tmp_path):
    path = write_template(str(tmp_path / "t" / "afcl.toml"), preset="sd2", clients=4)
    text = open(path, encoding="utf-8").read()
    assert "# " in text
    m = ConfigManager(path).manifest
    assert m.clients == 4
    assert m.run["k_star"] == 5
    assert m.dataset["synth"]["n"] == 2900
