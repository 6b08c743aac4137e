"""
k-means++ seeding on clients and the server-side pooled re-seeding.
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.core.dataset import DataMatrix
from app.core.errors import SeedingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SeedSet:
    """k x d seed matrix plus stable per-seed ids (used for trajectories)."""
    seeds: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        seeds = np.array(self.seeds, dtype=float)
        ids = np.asarray(self.ids, dtype=int)
        if seeds.ndim != 2 or seeds.shape[0] < 1:
            raise ValueError(f"seeds must be a nonempty k x d array, got shape {seeds.shape}")
        if ids.shape != (seeds.shape[0],) or len(set(ids.tolist())) != ids.size:
            raise ValueError("ids must be unique, one per seed")
        if not np.all(np.isfinite(seeds)):
            raise ValueError("seeds must be finite")
        seeds.setflags(write=False)
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "ids", ids)

    @property
    def k(self) -> int:
        return self.seeds.shape[0]

    @property
    def dim(self) -> int:
        return self.seeds.shape[1]

    def replace(self, seeds: np.ndarray) -> "SeedSet":
        """Same ids, new positions."""
        return SeedSet(seeds, self.ids)


def _as_points(m) -> np.ndarray:
    if isinstance(m, DataMatrix):
        return m.values
    if isinstance(m, SeedSet):
        return m.seeds
    points = np.asarray(m, dtype=float)
    return points.reshape(-1, 1) if points.ndim == 1 else points


def kmeanspp_init(m, k: int, rng_seed: int) -> SeedSet:
    """Select k rows by D^2 sampling (seeding only, no Lloyd refinement).

    The first seed is uniform over rows; every further seed is drawn with
    probability proportional to its squared distance from the nearest seed
    chosen so far. Seeds are always exact copies of input rows.
    """
    points = _as_points(m)
    n = points.shape[0]
    if k < 1:
        raise SeedingError(f"k must be >= 1, got {k}")
    if k > n:
        raise SeedingError(f"k = {k} exceeds the {n} available points")

    rng = np.random.default_rng(rng_seed)
    chosen = np.empty(k, dtype=int)
    taken = np.zeros(n, dtype=bool)

    chosen[0] = rng.integers(n)
    taken[chosen[0]] = True
    min_d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)

    for i in range(1, k):
        weights = np.where(taken, 0.0, min_d2)
        total = weights.sum()
        if total > 0:
            idx = int(rng.choice(n, p=weights / total))
        else:
            # only duplicates of chosen points remain
            idx = int(rng.choice(np.flatnonzero(~taken)))
        chosen[i] = idx
        taken[idx] = True
        min_d2 = np.minimum(min_d2, np.sum((points - points[idx]) ** 2, axis=1))

    return SeedSet(points[chosen].copy(), np.arange(1, k + 1))


def server_pool_init(client_seed_sets: list[SeedSet], k: int, rng_seed: int) -> SeedSet:
    """k-means++ over the union of all client seeds; fresh global ids 1..k."""
    if not client_seed_sets:
        raise SeedingError("no client seed sets to pool")
    pooled = np.vstack([s.seeds for s in client_seed_sets])
    if pooled.shape[0] < k:
        raise SeedingError(f"pooled seed count {pooled.shape[0]} is smaller than k = {k}")
    logger.debug("Pooling %d client seeds from %d client(s) into %d global seeds",
                 pooled.shape[0], len(client_seed_sets), k)
    return kmeanspp_init(pooled, k, rng_seed)
