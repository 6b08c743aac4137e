import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from app.core.dataset import DataMatrix, save_csv
from app.services import experiment_service, report_service
from app.services.experiment_service import ExperimentRunner
from app.config.config_manager import ConfigManager
from tests.helpers import blob_data

SMALL_MANIFEST = """
trials = 2
seed = 3
output_dir = "runs"

[dataset.synth]
blobs = 3
n = 240
d = 2

[partitioning]
clients = 2

[run]
k_star = 3
max_iter = 12
"""


def _manifest(tmp_path, text=SMALL_MANIFEST) -> str:
    path = tmp_path / "m.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# report_service
# ---------------------------------------------------------------------------

def test_to_jsonable_handles_non_finite_and_numpy():
    out = report_service.to_jsonable({
        "a": math.inf, "b": math.nan, "c": np.float64(0.5), "d": np.array([1, 2]),
        "e": (np.int64(3), -math.inf), 4: np.bool_(True),
    })
    assert out == {"a": "inf", "b": None, "c": 0.5, "d": [1, 2], "e": [3, "-inf"], "4": True}
    json.dumps(out, allow_nan=False)


def test_version_is_read_from_file():
    version = report_service.get_current_version()
    assert version.count(".") == 2


def test_summary_statistics():
    class _R:
        def __init__(self, sc, k, iters):
            self.metrics = {"sc": sc, "ch": math.inf}
            self.learned_k = k
            self.iterations_run = iters
            self.converged = True
            self.iteration_seconds = [0.1, 0.3]

    summary = report_service.summarize([_R(0.8, 4, 10), _R(0.6, 4, 20), _R(None, 3, 30)])
    assert summary["trials"] == 3
    assert summary["sc"]["mean"] == pytest.approx(0.7)
    assert summary["sc"]["count"] == 2
    assert summary["ch"]["count"] == 0
    assert summary["learned_k_counts"] == {"3": 1, "4": 2}
    assert summary["iterations"]["mean"] == pytest.approx(20.0)
    assert summary["seconds_per_iteration"]["mean"] == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def test_trial_config_is_reproducible(tmp_path):
    manifest = ConfigManager(_manifest(tmp_path)).manifest
    runner = ExperimentRunner(manifest)
    a, b = runner.trial_config(0), runner.trial_config(0)
    assert a == b
    assert 3 <= a.k0 <= 6
    assert all(0.2 <= p <= 1.0 for p in a.schedule.probs)
    assert runner.trial_config(1).rng_seed != a.rng_seed


def test_run_manifest_writes_artifacts(tmp_path):
    result = experiment_service.run_manifest(_manifest(tmp_path))
    assert result["success"], result["message"]
    out = result["output_dir"]
    for name in ("report_0.json", "report_1.json", "trajectory_0.csv", "objective_1.csv",
                 "summary.json", "manifest.resolved.toml"):
        assert os.path.isfile(os.path.join(out, name)), name

    report = json.load(open(os.path.join(out, "report_0.json"), encoding="utf-8"))
    assert report["trial"] == 0
    assert len(report["assignment"]) == 240
    k = len(report["final_seeds"]["ids"])

    trajectory = pd.read_csv(os.path.join(out, "trajectory_0.csv"))
    assert list(trajectory.columns) == ["iteration", "seed_id", "dim_0", "dim_1"]
    assert len(trajectory) == (report["iterations_run"] + 1) * k

    objective = pd.read_csv(os.path.join(out, "objective_0.csv"), dtype={"participant_ids": str})
    assert list(objective.columns) == ["iteration", "Z", "participant_ids"]
    assert len(objective) == report["iterations_run"]
    assert objective["iteration"].tolist() == list(range(1, report["iterations_run"] + 1))

    summary = json.load(open(os.path.join(out, "summary.json"), encoding="utf-8"))
    assert summary["trials"] == 2


def test_rerun_is_byte_identical(tmp_path):
    path = _manifest(tmp_path)
    first = experiment_service.run_manifest(path, output_dir=str(tmp_path / "a"))
    second = experiment_service.run_manifest(path, output_dir=str(tmp_path / "b"))
    assert first["success"] and second["success"]
    for name in ("report_0.json", "trajectory_1.csv", "objective_0.csv"):
        with open(tmp_path / "a" / name, "rb") as fa, open(tmp_path / "b" / name, "rb") as fb:
            assert fa.read() == fb.read(), name


def test_parallel_trials_match_serial(tmp_path):
    path = _manifest(tmp_path)
    experiment_service.run_manifest(path, output_dir=str(tmp_path / "serial"))
    experiment_service.run_manifest(path, output_dir=str(tmp_path / "parallel"), jobs=2)
    for name in ("report_0.json", "report_1.json"):
        serial = (tmp_path / "serial" / name).read_bytes()
        parallel = (tmp_path / "parallel" / name).read_bytes()
        assert serial == parallel


def test_progress_callback_reaches_100(tmp_path):
    seen = []
    experiment_service.run_manifest(_manifest(tmp_path), progress_callback=lambda m, p: seen.append(p))
    assert seen[-1] == 100


def test_missing_dataset_fails_cleanly(tmp_path):
    text = SMALL_MANIFEST.replace("[dataset.synth]\nblobs = 3\nn = 240\nd = 2",
                                  '[dataset]\npath = "nowhere.csv"')
    result = experiment_service.run_manifest(_manifest(tmp_path, text))
    assert not result["success"]
    assert "does not exist" in result["message"]


def test_invalid_manifest_fails_cleanly(tmp_path):
    result = experiment_service.run_manifest(_manifest(tmp_path, SMALL_MANIFEST + "\nbogus = 1\n"))
    assert not result["success"]
    assert "bogus" in result["message"]


# ---------------------------------------------------------------------------
# Partition and evaluation
# ---------------------------------------------------------------------------

def test_write_partition(tmp_path):
    data_path = save_csv(blob_data(3, 150, seed=2), str(tmp_path / "blobs.csv"))
    result = experiment_service.write_partition(data_path, 3, str(tmp_path / "clients"),
                                                seed=1, label_col="label")
    assert result["success"], result["message"]
    assert sum(result["sizes"].values()) == 150
    for g in (1, 2, 3):
        assert os.path.isfile(tmp_path / "clients" / f"client_{g}.csv")
    info = json.load(open(tmp_path / "clients" / "partition.json", encoding="utf-8"))
    rows = sorted(r for ids in info["rows"].values() for r in ids)
    assert rows == list(range(150))


def test_evaluate_correct_and_shuffled_labels(tmp_path):
    rng = np.random.default_rng(0)
    values = np.r_[rng.normal(0.0, 0.01, 30), rng.normal(1.0, 0.01, 30)].reshape(-1, 1)
    labels = np.r_[np.zeros(30, dtype=int), np.ones(30, dtype=int)]
    data_path = save_csv(DataMatrix(values), str(tmp_path / "d.csv"))
    good_path = save_csv(DataMatrix(np.zeros((60, 1)), labels), str(tmp_path / "good.csv"))
    bad_path = save_csv(DataMatrix(np.zeros((60, 1)), rng.permutation(labels)), str(tmp_path / "bad.csv"))

    good = experiment_service.evaluate_labels(data_path, good_path)
    bad = experiment_service.evaluate_labels(data_path, bad_path)
    assert good["success"] and bad["success"]
    assert good["sc"] > 0.95
    assert bad["sc"] < 0.3
    assert good["k"] == 2 and good["n"] == 60


def test_evaluate_length_mismatch(tmp_path):
    data_path = save_csv(DataMatrix(np.arange(5.0).reshape(-1, 1)), str(tmp_path / "d.csv"))
    labels_path = save_csv(DataMatrix(np.zeros((4, 1)), np.array([0, 1, 0, 1])), str(tmp_path / "l.csv"))
    result = experiment_service.evaluate_labels(data_path, labels_path)
    assert not result["success"]
    assert "4 labels for 5" in result["message"]


def test_evaluate_single_cluster(tmp_path):
    data_path = save_csv(DataMatrix(np.arange(5.0).reshape(-1, 1)), str(tmp_path / "d.csv"))
    labels_path = save_csv(DataMatrix(np.zeros((5, 1)), np.zeros(5, dtype=int)), str(tmp_path / "l.csv"))
    result = experiment_service.evaluate_labels(data_path, labels_path)
    assert not result["success"]
