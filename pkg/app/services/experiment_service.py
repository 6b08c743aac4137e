"""
Experiment service: manifest-driven multi-trial runs, client partitioning
to disk, and stand-alone scoring of labelled data.

Functions here catch library errors and return result dicts
{"success": bool, "message": str, ...} for the CLI to print.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from app.config.config_manager import ConfigManager, ExperimentManifest
from app.config.run_config import (
    ParticipationSchedule, RunConfig, draw_initial_k, draw_participation_probs,
)
from app.core import rng as rngs
from app.core.dataset import (
    DataMatrix, load_csv, load_labels, make_blob_spec, minmax_normalize,
    partition_noniid, save_csv, synth_gaussian,
)
from app.core.errors import AFCLError, UndefinedIndexError
from app.core.metrics import LabeledEvaluation, calinski_harabasz, silhouette
from app.core.orchestrator import ClusterReport, run
from app.services import report_service

logger = logging.getLogger(__name__)

# Keys of the [run] table that map one-to-one onto RunConfig fields
_RUN_FIELDS = (
    "xi", "eta", "max_iter", "conv_rel_tol", "conv_patience", "merge_radius",
    "literal_eq9", "balance", "shuffle_rows", "dup_threshold", "workers",
)


def load_dataset(dataset: dict) -> DataMatrix:
    """Raw (unnormalized) data described by a resolved [dataset] table."""
    if "path" in dataset:
        return load_csv(dataset["path"], dataset.get("has_header", True), dataset.get("label_col"))
    synth = dataset["synth"]
    spec = make_blob_spec(synth["blobs"], synth["n"], synth["d"], rng_seed=synth["seed"],
                          stddev=synth["stddev"], separation=synth["separation"])
    return synth_gaussian(spec)


class ExperimentRunner:
    """Runs the trials of one manifest and writes their artifacts."""

    def __init__(self, manifest: ExperimentManifest, jobs: int = 1):
        self.manifest = manifest
        self.jobs = max(1, int(jobs))
        self._data: DataMatrix | None = None

    @property
    def data(self) -> DataMatrix:
        if self._data is None:
            self._data = minmax_normalize(load_dataset(self.manifest.dataset))
        return self._data

    def trial_config(self, t: int) -> RunConfig:
        """RunConfig of trial t; depends only on the manifest and t."""
        m = self.manifest
        run_table = m.run
        trial_seed = rngs.derive_seed(m.seed, rngs.STREAM_TRIAL, t)

        if "k0" in run_table:
            k0 = int(run_table["k0"])
        else:
            k0 = draw_initial_k(run_table["k_star"], rngs.make_rng(m.seed, rngs.STREAM_EXPERIMENT, t, 0))

        part = run_table["participation"]
        if "probs" in part:
            probs = tuple(part["probs"])
        else:
            probs = draw_participation_probs(m.clients, rngs.make_rng(m.seed, rngs.STREAM_EXPERIMENT, t, 1),
                                             part["low"], part["high"])
        schedule = ParticipationSchedule(
            probs,
            rng_seed=rngs.derive_seed(trial_seed, rngs.STREAM_SCHEDULE),
            resample_empty=part["resample_empty"],
        )
        fields = {key: run_table[key] for key in _RUN_FIELDS if key in run_table}
        return RunConfig(
            k0=k0,
            schedule=schedule,
            rng_seed=trial_seed,
            partition_seed=m.partitioning.get("seed"),
            **fields,
        )

    def run_trial(self, t: int) -> ClusterReport:
        config = self.trial_config(t)
        logger.info("Trial %d: k0 = %d, probs = %s", t, config.k0,
                    [round(p, 3) for p in config.schedule.probs])
        report = run(self.data, config)
        extra = {
            "trial": t,
            "participation_probs": list(config.schedule.probs),
            "version": report_service.get_current_version(),
        }
        report_service.write_trial_outputs(report, self.manifest.output_dir, t, extra)
        logger.info("Trial %d done: learned k = %d after %d iteration(s)",
                    t, report.learned_k, report.iterations_run)
        return report

    def run_all(self, progress_callback=None) -> list[ClusterReport]:
        """Run every trial; reports come back in trial order.

        progress_callback(message: str, percent: int)
        """
        trials = self.manifest.trials
        data = self.data  # load once, before any worker thread touches it
        logger.info("Running %d trial(s) on %d x %d data", trials, data.rows, data.cols)
        reports: list[ClusterReport | None] = [None] * trials

        def _one(t: int):
            reports[t] = self.run_trial(t)
            if progress_callback:
                done = sum(1 for r in reports if r is not None)
                progress_callback(f"Trial {t} finished", int(100 * done / trials))

        if self.jobs > 1 and trials > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                for future in [pool.submit(_one, t) for t in range(trials)]:
                    future.result()
        else:
            for t in range(trials):
                _one(t)
        return reports


def run_manifest(manifest_path: str, output_dir: str | None = None, jobs: int = 1,
                 progress_callback=None) -> dict:
    """Load a manifest, run all trials, and write reports plus summary.json."""
    try:
        cfg = ConfigManager(manifest_path)
        manifest = cfg.manifest
        if output_dir:
            manifest = replace(manifest, output_dir=os.path.abspath(output_dir))
        os.makedirs(manifest.output_dir, exist_ok=True)
        resolved = cfg.save_resolved(manifest.output_dir)

        reports = ExperimentRunner(manifest, jobs=jobs).run_all(progress_callback)
        summary_path = report_service.write_summary(reports, manifest.output_dir)
    except (AFCLError, OSError, ValueError) as e:
        logger.error("Run failed: %s", e)
        return {"success": False, "message": str(e)}

    summary = report_service.summarize(reports)
    return {
        "success": True,
        "message": f"{manifest.trials} trial(s) written to {manifest.output_dir}",
        "output_dir": manifest.output_dir,
        "manifest": resolved,
        "summary_path": summary_path,
        "summary": summary,
    }


def write_partition(data_path: str, clients: int, output_dir: str, seed: int = 0,
                    has_header: bool = True, label_col=None, normalize: bool = True) -> dict:
    """Split a CSV dataset into client_<g>.csv files plus partition.json."""
    try:
        data = load_csv(data_path, has_header, label_col)
        if normalize:
            data = minmax_normalize(data)
        parts = partition_noniid(data, clients, seed)
        os.makedirs(output_dir, exist_ok=True)
        files = []
        for client in parts:
            path = os.path.join(output_dir, f"client_{client.client_id}.csv")
            files.append(save_csv(client.data, path))
        info = {
            "source": os.path.abspath(data_path),
            "clients": clients,
            "seed": seed,
            "normalized": normalize,
            "sizes": {str(c.client_id): c.size for c in parts},
            "rows": {str(c.client_id): c.row_index.tolist() for c in parts},
        }
        summary_path = report_service.write_json(info, os.path.join(output_dir, "partition.json"))
    except (AFCLError, OSError, ValueError) as e:
        logger.error("Partition failed: %s", e)
        return {"success": False, "message": str(e)}

    return {
        "success": True,
        "message": f"Wrote {clients} client file(s) to {output_dir}",
        "files": files + [summary_path],
        "sizes": info["sizes"],
    }


def evaluate_labels(data_path: str, labels_path: str, has_header: bool = True,
                    label_col=None, normalize: bool = False) -> dict:
    """SC and CH of an external labelling; an undefined index is an error."""
    try:
        data = load_csv(data_path, has_header, label_col)
        if normalize:
            data = minmax_normalize(data)
        labels = load_labels(labels_path, has_header)
        if labels.size != data.rows:
            return {"success": False,
                    "message": f"{labels.size} labels for {data.rows} data rows"}
        ev = LabeledEvaluation(data, labels)
        sc = silhouette(ev)
        ch = calinski_harabasz(ev)
    except UndefinedIndexError as e:
        return {"success": False, "message": str(e)}
    except (AFCLError, OSError) as e:
        logger.error("Evaluation failed: %s", e)
        return {"success": False, "message": str(e)}

    return {
        "success": True,
        "message": "ok",
        "n": ev.n,
        "k": ev.k_hat,
        "sc": float(sc),
        "ch": float(ch) if np.isfinite(ch) else "inf",
    }
