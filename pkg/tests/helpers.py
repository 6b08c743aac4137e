"""Builders shared by the test modules."""

from app.config.run_config import ParticipationSchedule, RunConfig
from app.core.dataset import DataMatrix, make_blob_spec, minmax_normalize, synth_gaussian


def make_config(probs, k0: int, **changes) -> RunConfig:
    """RunConfig over len(probs) clients with a fixed schedule seed."""
    schedule = ParticipationSchedule(tuple(probs), rng_seed=changes.pop("schedule_seed", 11),
                                     resample_empty=changes.pop("resample_empty", True))
    return RunConfig(k0=k0, schedule=schedule, **changes)


def blob_data(blobs: int, n: int, d: int = 2, seed: int = 0) -> DataMatrix:
    """Normalized, labelled Gaussian blobs."""
    return minmax_normalize(synth_gaussian(make_blob_spec(blobs, n, d, rng_seed=seed)))
