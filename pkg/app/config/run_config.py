"""
Run configuration types and the experiment-protocol draw helpers.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from app.config.defaults import MERGE_RADIUS_FACTOR, PARTICIPATION_DEFAULTS, RUN_DEFAULTS
from app.core.errors import ConfigError


@dataclass(frozen=True)
class ParticipationSchedule:
    """Per-client upload probability per iteration (client g at index g - 1)."""
    probs: tuple
    rng_seed: int = 0
    resample_empty: bool = PARTICIPATION_DEFAULTS["resample_empty"]

    def __post_init__(self):
        probs = tuple(float(v) for v in self.probs)
        if not probs:
            raise ConfigError("participation schedule needs at least one client")
        for g, prob in enumerate(probs, start=1):
            if not 0.0 < prob <= 1.0:
                raise ConfigError(f"participation probability of client {g} must be in (0, 1], got {prob}")
        object.__setattr__(self, "probs", probs)

    @property
    def clients(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class RunConfig:
    k0: int
    schedule: ParticipationSchedule
    xi: float = RUN_DEFAULTS["xi"]
    eta: float = RUN_DEFAULTS["eta"]
    max_iter: int = RUN_DEFAULTS["max_iter"]
    conv_rel_tol: float = RUN_DEFAULTS["conv_rel_tol"]
    conv_patience: int = RUN_DEFAULTS["conv_patience"]
    merge_radius: float | None = None
    rng_seed: int = 0
    literal_eq9: bool = RUN_DEFAULTS["literal_eq9"]
    balance: bool = RUN_DEFAULTS["balance"]
    shuffle_rows: bool = RUN_DEFAULTS["shuffle_rows"]
    dup_threshold: float = RUN_DEFAULTS["dup_threshold"]
    workers: int = RUN_DEFAULTS["workers"]
    partition_seed: int | None = None

    def __post_init__(self):
        if self.k0 < 1:
            raise ConfigError(f"k0 must be >= 1, got {self.k0}")
        if not self.xi > 0:
            raise ConfigError(f"xi must be > 0, got {self.xi}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0, got {self.max_iter}")
        if not self.conv_rel_tol > 0:
            raise ConfigError(f"conv_rel_tol must be > 0, got {self.conv_rel_tol}")
        if self.conv_patience < 1:
            raise ConfigError(f"conv_patience must be >= 1, got {self.conv_patience}")
        if self.merge_radius is not None and not self.merge_radius > 0:
            raise ConfigError(f"merge_radius must be > 0, got {self.merge_radius}")
        if not self.dup_threshold > 0:
            raise ConfigError(f"dup_threshold must be > 0, got {self.dup_threshold}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def clients(self) -> int:
        return self.schedule.clients

    def resolved_merge_radius(self, d: int) -> float:
        return self.merge_radius if self.merge_radius is not None else default_merge_radius(d)

    def with_changes(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def default_merge_radius(d: int) -> float:
    return MERGE_RADIUS_FACTOR * math.sqrt(d)


# ---------------------------------------------------------------------------
# Experiment protocol draws
# ---------------------------------------------------------------------------

def draw_initial_k(k_star: int, rng: np.random.Generator) -> int:
    """Uniform integer draw from [k*, 2k*] (both ends included)."""
    if k_star < 1:
        raise ConfigError(f"k_star must be >= 1, got {k_star}")
    return int(rng.integers(k_star, 2 * k_star + 1))


def draw_participation_probs(p: int, rng: np.random.Generator,
                             low: float = PARTICIPATION_DEFAULTS["low"],
                             high: float = PARTICIPATION_DEFAULTS["high"]) -> tuple:
    """Give each of p clients its own probability, uniform in [low, high]."""
    if not 0.0 < low <= high <= 1.0:
        raise ConfigError(f"participation range must satisfy 0 < low <= high <= 1, got [{low}, {high}]")
    return tuple(float(v) for v in rng.uniform(low, high, size=p))
