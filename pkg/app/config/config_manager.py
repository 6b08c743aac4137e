"""
Configuration manager: loads, validates and writes experiment manifests (TOML).
"""

import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass

import tomli_w
import tomlkit

from app.config.defaults import (
    MANIFEST_DEFAULTS, MANIFEST_SCHEMA, PARTICIPATION_DEFAULTS, RUN_DEFAULTS,
    SYNTH_DEFAULTS, SYNTH_PRESETS,
)
from app.core.errors import ConfigError

logger = logging.getLogger(__name__)

RESOLVED_MANIFEST_NAME = "manifest.resolved.toml"


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything needed to reproduce a batch of trials."""
    dataset: dict
    partitioning: dict
    run: dict
    trials: int
    seed: int
    output_dir: str

    @property
    def clients(self) -> int:
        return int(self.partitioning["clients"])

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": self.dataset,
            "partitioning": self.partitioning,
            "run": self.run,
        }


class ConfigManager:
    def __init__(self, path: str):
        self.path = os.path.abspath(path)
        self._base_dir = os.path.dirname(self.path)
        self._config = self._load()
        self._validate_keys(self._config, "")
        self.manifest = self._build()

    # ------------------------------------------------------------------
    # Low-level load
    # ------------------------------------------------------------------
    def _load(self) -> dict:
        if not os.path.isfile(self.path):
            raise ConfigError(f"Manifest not found: {self.path}")
        try:
            with open(self.path, "rb") as f:
                return tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Cannot parse manifest {self.path}: {e}")
        except OSError as e:
            raise ConfigError(f"Cannot read manifest {self.path}: {e}")

    def _validate_keys(self, table: dict, section: str):
        allowed = MANIFEST_SCHEMA.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in table.items():
            where = f"{section}.{key}" if section else key
            if key not in allowed:
                raise ConfigError(f"unknown key '{where}' in manifest")
            if isinstance(value, dict):
                self._validate_keys(value, where)

    def _resolve_path(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self._base_dir, path))

    # ------------------------------------------------------------------
    # Sections
    # ------------------------------------------------------------------
    def _build(self) -> ExperimentManifest:
        trials = self._int(self._config.get("trials", MANIFEST_DEFAULTS["trials"]), "trials", low=1)
        seed = self._int(self._config.get("seed", MANIFEST_DEFAULTS["seed"]), "seed", low=0)
        output_dir = self._resolve_path(str(self._config.get("output_dir", MANIFEST_DEFAULTS["output_dir"])))
        partitioning = self._partitioning()
        return ExperimentManifest(
            dataset=self._dataset(),
            partitioning=partitioning,
            run=self._run(int(partitioning["clients"])),
            trials=trials,
            seed=seed,
            output_dir=output_dir,
        )

    def _dataset(self) -> dict:
        raw = dict(self._config.get("dataset", {}))
        sources = [k for k in ("path", "preset", "synth") if k in raw]
        if len(sources) != 1:
            raise ConfigError("[dataset] needs exactly one of 'path', 'preset' or [dataset.synth]")

        if "path" in raw:
            return {
                "path": self._resolve_path(str(raw["path"])),
                "has_header": bool(raw.get("has_header", True)),
                "label_col": raw.get("label_col"),
            }
        if "preset" in raw:
            name = str(raw["preset"]).lower()
            if name not in SYNTH_PRESETS:
                raise ConfigError(f"unknown dataset preset '{name}' (known: {', '.join(sorted(SYNTH_PRESETS))})")
            preset = SYNTH_PRESETS[name]
            synth = {"blobs": preset["blobs"], "n": preset["n"], "d": preset["d"]}
        else:
            synth = dict(raw["synth"])
            for key in ("blobs", "n", "d"):
                if key not in synth:
                    raise ConfigError(f"[dataset.synth] is missing '{key}'")
        for key, value in SYNTH_DEFAULTS.items():
            synth.setdefault(key, value)
        synth["blobs"] = self._int(synth["blobs"], "dataset.synth.blobs", low=1)
        synth["n"] = self._int(synth["n"], "dataset.synth.n", low=synth["blobs"])
        synth["d"] = self._int(synth["d"], "dataset.synth.d", low=1)
        synth["seed"] = self._int(synth["seed"], "dataset.synth.seed", low=0)
        synth["stddev"] = self._positive(synth["stddev"], "dataset.synth.stddev")
        synth["separation"] = self._positive(synth["separation"], "dataset.synth.separation")
        return {"synth": synth}

    def _partitioning(self) -> dict:
        raw = dict(self._config.get("partitioning", {}))
        if "clients" not in raw:
            raise ConfigError("[partitioning] needs 'clients'")
        out = {"clients": self._int(raw["clients"], "partitioning.clients", low=1)}
        if "seed" in raw:
            out["seed"] = self._int(raw["seed"], "partitioning.seed", low=0)
        return out

    def _run(self, clients: int) -> dict:
        raw = dict(self._config.get("run", {}))
        participation = dict(raw.pop("participation", {}))
        run = dict(RUN_DEFAULTS)
        run.update(raw)

        if "k0" not in run and "k_star" not in run:
            raise ConfigError("[run] needs 'k0' or 'k_star' (k0 is then drawn from [k_star, 2 k_star])")
        if "k0" in run:
            run["k0"] = self._int(run["k0"], "run.k0", low=1)
        if "k_star" in run:
            run["k_star"] = self._int(run["k_star"], "run.k_star", low=1)
        for key in ("xi", "eta", "conv_rel_tol", "dup_threshold"):
            run[key] = self._positive(run[key], f"run.{key}")
        if "merge_radius" in run:
            run["merge_radius"] = self._positive(run["merge_radius"], "run.merge_radius")
        run["max_iter"] = self._int(run["max_iter"], "run.max_iter", low=0)
        run["conv_patience"] = self._int(run["conv_patience"], "run.conv_patience", low=1)
        run["workers"] = self._int(run["workers"], "run.workers", low=1)
        for key in ("literal_eq9", "balance", "shuffle_rows"):
            if not isinstance(run[key], bool):
                raise ConfigError(f"run.{key} must be true or false")

        part = {"resample_empty": bool(participation.get("resample_empty",
                                                         PARTICIPATION_DEFAULTS["resample_empty"]))}
        if "probs" in participation:
            probs = [float(v) for v in participation["probs"]]
            if len(probs) != clients:
                raise ConfigError(f"run.participation.probs has {len(probs)} entries for {clients} client(s)")
            if any(not 0.0 < v <= 1.0 for v in probs):
                raise ConfigError("run.participation.probs entries must be in (0, 1]")
            part["probs"] = probs
        else:
            low = float(participation.get("low", PARTICIPATION_DEFAULTS["low"]))
            high = float(participation.get("high", PARTICIPATION_DEFAULTS["high"]))
            if not 0.0 < low <= high <= 1.0:
                raise ConfigError("run.participation needs 0 < low <= high <= 1")
            part["low"], part["high"] = low, high
        run["participation"] = part
        return run

    # ------------------------------------------------------------------
    # Value checks
    # ------------------------------------------------------------------
    @staticmethod
    def _int(value, where: str, low: int | None = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        if low is not None and value < low:
            raise ConfigError(f"{where} must be >= {low}, got {value}")
        return value

    @staticmethod
    def _positive(value, where: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
            raise ConfigError(f"{where} must be a positive number, got {value!r}")
        return float(value)

    # ------------------------------------------------------------------
    # Writing
    # ------------------------------------------------------------------
    def save_resolved(self, output_dir: str | None = None) -> str:
        """Write the manifest with every default filled in next to the run outputs."""
        out_dir = output_dir or self.manifest.output_dir
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, RESOLVED_MANIFEST_NAME)
        resolved = self.manifest.to_dict()
        resolved["output_dir"] = os.path.abspath(out_dir)
        resolved = _drop_none(resolved)
        with open(path, "wb") as f:
            tomli_w.dump(resolved, f)
        return path


def _drop_none(value):
    if isinstance(value, dict):
        return {k: _drop_none(v) for k, v in value.items() if v is not None}
    return value


# ---------------------------------------------------------------------------
# Template
# ---------------------------------------------------------------------------

def write_template(path: str, preset: str = "sd1", clients: int = 3) -> str:
    """Write a commented starter manifest."""
    doc = tomlkit.document()
    doc.add(tomlkit.comment("Asynchronous federated clustering experiment manifest"))
    doc.add(tomlkit.nl())
    doc.add("trials", 20)
    doc["trials"].comment("independent seeded runs")
    doc.add("seed", 7)
    doc["seed"].comment("every trial seed is derived from this one")
    doc.add("output_dir", "runs/" + preset)

    dataset = tomlkit.table()
    dataset.add(tomlkit.comment("one of: path = \"data.csv\" | preset = \"sd1\" | [dataset.synth]"))
    dataset.add("preset", preset)
    doc.add("dataset", dataset)

    partitioning = tomlkit.table()
    partitioning.add("clients", clients)
    partitioning["clients"].comment("k-means split: each cluster becomes one client")
    doc.add("partitioning", partitioning)

    run = tomlkit.table()
    k_star = SYNTH_PRESETS.get(preset, {}).get("blobs", 4)
    run.add("k_star", k_star)
    run["k_star"].comment("k0 is drawn from [k_star, 2 k_star] per trial; set k0 to fix it")
    for key in ("xi", "eta", "max_iter", "conv_rel_tol", "conv_patience", "balance", "literal_eq9"):
        run.add(key, RUN_DEFAULTS[key])
    run.add(tomlkit.comment("merge_radius = 0.0141  # defaults to 0.01 * sqrt(d)"))

    participation = tomlkit.table()
    participation.add("low", PARTICIPATION_DEFAULTS["low"])
    participation.add("high", PARTICIPATION_DEFAULTS["high"])
    participation["high"].comment("or: probs = [1.0, 0.2, 0.2]")
    run.add("participation", participation)
    doc.add("run", run)

    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(tomlkit.dumps(doc))
    logger.info("Wrote manifest template %s", path)
    return path
