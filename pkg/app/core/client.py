"""
Client-side update accumulation.

One client round assigns every local object to a winner seed under
frequency-sensitive weights, records the suspended update intensity the
object exerts on its winner, and summarizes the resulting local clusters
(centers, sizes, within-cluster dispersion) for the server. Seeds are never
moved on the client.
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.core.dataset import ClientDataset
from app.core.seeding import SeedSet

logger = logging.getLogger(__name__)


@dataclass
class WinState:
    """Winning counts within the current round; gamma is derived from them."""
    s: np.ndarray

    @classmethod
    def fresh(cls, k: int) -> "WinState":
        # all-ones so gamma is defined before the first win
        return cls(np.ones(k, dtype=float))

    @property
    def gamma(self) -> np.ndarray:
        return self.s / self.s.sum()


@dataclass(frozen=True, eq=False)
class UpdateIntensitySet:
    """Intensity vectors in processing order, each tagged with its winner seed."""
    vectors: np.ndarray
    owners: np.ndarray
    k: int

    def for_seed(self, r: int) -> np.ndarray:
        return self.vectors[self.owners == r]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owners, minlength=self.k)

    def canonical_order(self) -> np.ndarray:
        """Row order by ascending seed index, stored order within a seed."""
        return np.argsort(self.owners, kind="stable")

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True, eq=False)
class ClientUpload:
    client_id: int
    round_index: int
    B: np.ndarray
    z: np.ndarray
    o: np.ndarray
    R: UpdateIntensitySet

    @property
    def present(self) -> np.ndarray:
        return self.o > 0


# ---------------------------------------------------------------------------
# Per-object steps
# ---------------------------------------------------------------------------

def _weighted_argmin(d2: np.ndarray, gamma: np.ndarray) -> int:
    # np.argmin returns the first minimum -> lowest index wins ties
    return int(np.argmin(gamma * d2))


def assign_winner(x: np.ndarray, M: SeedSet, gamma: np.ndarray) -> int:
    seeds = M.seeds if isinstance(M, SeedSet) else np.asarray(M, dtype=float)
    d2 = np.sum((seeds - np.asarray(x, dtype=float)) ** 2, axis=1)
    return _weighted_argmin(d2, np.asarray(gamma, dtype=float))


def record_win(state: WinState, winner: int) -> WinState:
    """Increment the winner's count in place and return the state."""
    state.s[winner] += 1.0
    return state


def update_intensity(x: np.ndarray, m_winner: np.ndarray, eta: float) -> np.ndarray:
    if not eta > 0:
        raise ValueError(f"learning rate must be > 0, got {eta}")
    return eta * (np.asarray(x, dtype=float) - np.asarray(m_winner, dtype=float))


# ---------------------------------------------------------------------------
# Local cluster summaries
# ---------------------------------------------------------------------------

def _values(X) -> np.ndarray:
    if isinstance(X, ClientDataset):
        return X.data.values
    return np.asarray(X, dtype=float)


def local_centers(X, winners: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of each local cluster and its size; empty clusters get a NaN row."""
    points = _values(X)
    winners = np.asarray(winners, dtype=int)
    o = np.bincount(winners, minlength=k)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, winners, points)
    B = np.full((k, points.shape[1]), np.nan)
    present = o > 0
    B[present] = sums[present] / o[present, None]
    return B, o


def local_contributions(X, winners: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Within-cluster sum of squared distances to B; NaN for empty clusters."""
    points = _values(X)
    winners = np.asarray(winners, dtype=int)
    k = B.shape[0]
    sq = np.sum((points - B[winners]) ** 2, axis=1)
    z = np.bincount(winners, weights=sq, minlength=k).astype(float)
    z[np.bincount(winners, minlength=k) == 0] = np.nan
    return z


# ---------------------------------------------------------------------------
# Round
# ---------------------------------------------------------------------------

def client_round(X: ClientDataset, M: SeedSet, eta: float, round_index: int = 0,
                 shuffle_seed: int | None = None) -> ClientUpload:
    """Run one local round against a frozen snapshot of the global seeds.

    Objects are visited in stored row order (or a seeded permutation when
    ``shuffle_seed`` is given); gamma is refreshed after every win.
    """
    if not eta > 0:
        raise ValueError(f"learning rate must be > 0, got {eta}")
    points = X.data.values
    seeds = M.seeds
    k = M.k
    n = points.shape[0]

    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)

    # M is frozen for the whole round, so distances can be taken up front
    d2 = np.sum((points[:, None, :] - seeds[None, :, :]) ** 2, axis=2)
    state = WinState.fresh(k)
    winners = np.empty(n, dtype=int)
    for i in order:
        c = _weighted_argmin(d2[i], state.gamma)
        record_win(state, c)
        winners[i] = c

    visited = winners[order]
    vectors = eta * (points[order] - seeds[visited])
    R = UpdateIntensitySet(vectors, visited, k)

    B, o = local_centers(points, winners, k)
    z = local_contributions(points, winners, B)
    logger.debug("Client %d round %d: sizes %s", X.client_id, round_index, o.tolist())
    return ClientUpload(X.client_id, round_index, B, z, o, R)
