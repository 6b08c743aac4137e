"""
Report writers: per-trial JSON reports, trajectory / objective CSV traces,
and the multi-trial summary.
"""

import json
import logging
import math
import os

import numpy as np
import pandas as pd

from app.core.orchestrator import ClusterReport

logger = logging.getLogger(__name__)

REPORT_NAME = "report_{t}.json"
TRAJECTORY_NAME = "trajectory_{t}.csv"
OBJECTIVE_NAME = "objective_{t}.csv"
SUMMARY_NAME = "summary.json"


def get_current_version() -> str:
    """Read the package version from the VERSION file at the repo root."""
    base = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    version_file = os.path.join(base, "VERSION")
    try:
        with open(version_file, "r", encoding="utf-8") as f:
            return f.read().strip()
    except OSError:
        return "0.0.0"


def to_jsonable(value):
    """Plain JSON types; +/-inf become strings and nan becomes null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def write_json(payload: dict, path: str) -> str:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(payload), f, indent=2, allow_nan=False)
        f.write("\n")
    return path


def write_report(report: ClusterReport, path: str, extra: dict | None = None) -> str:
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    return write_json(payload, path)


def write_trajectory_csv(report: ClusterReport, path: str) -> str:
    """One row per (iteration, seed): iteration 0 holds the initial seeds."""
    ids = report.final_seeds.ids
    d = report.final_seeds.dim
    frames = []
    for iteration, snapshot in enumerate(report.seed_trajectories):
        frame = pd.DataFrame(snapshot, columns=[f"dim_{j}" for j in range(d)])
        frame.insert(0, "seed_id", ids)
        frame.insert(0, "iteration", iteration)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    table.to_csv(path, index=False, float_format="%.17g")
    return path


def write_objective_csv(report: ClusterReport, path: str) -> str:
    """iteration, Z, participant_ids (semicolon-joined; empty for idle iterations)."""
    table = pd.DataFrame({
        "iteration": np.arange(1, len(report.objective_trace) + 1),
        "Z": report.objective_trace,
        "participant_ids": [";".join(str(g) for g in p) for p in report.participants],
    })
    table.to_csv(path, index=False, float_format="%.17g")
    return path


def write_trial_outputs(report: ClusterReport, output_dir: str, trial: int,
                        extra: dict | None = None) -> list[str]:
    os.makedirs(output_dir, exist_ok=True)
    written = [
        write_report(report, os.path.join(output_dir, REPORT_NAME.format(t=trial)), extra),
        write_trajectory_csv(report, os.path.join(output_dir, TRAJECTORY_NAME.format(t=trial))),
        write_objective_csv(report, os.path.join(output_dir, OBJECTIVE_NAME.format(t=trial))),
    ]
    logger.debug("Trial %d outputs: %s", trial, written)
    return written


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

def _mean_std(values: list) -> dict:
    finite = np.array([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if finite.size == 0:
        return {"mean": None, "std": None, "count": 0}
    return {"mean": float(finite.mean()), "std": float(finite.std()), "count": int(finite.size)}


def summarize(reports: list[ClusterReport]) -> dict:
    """Mean and (population) std over trials of SC, CH, learned k and iterations.

    Undefined or infinite index values are left out of the corresponding
    statistic; ``count`` says how many trials contributed.
    """
    seconds = [float(np.mean(r.iteration_seconds)) for r in reports if r.iteration_seconds]
    learned = [r.learned_k for r in reports]
    return {
        "trials": len(reports),
        "sc": _mean_std([r.metrics.get("sc") for r in reports]),
        "ch": _mean_std([r.metrics.get("ch") for r in reports]),
        "learned_k": _mean_std(learned),
        "learned_k_counts": {str(k): learned.count(k) for k in sorted(set(learned))},
        "iterations": _mean_std([r.iterations_run for r in reports]),
        "converged": sum(1 for r in reports if r.converged),
        "seconds_per_iteration": _mean_std(seconds),
    }


def write_summary(reports: list[ClusterReport], output_dir: str) -> str:
    path = os.path.join(output_dir, SUMMARY_NAME)
    write_json(summarize(reports), path)
    logger.info("Wrote %s", path)
    return path
