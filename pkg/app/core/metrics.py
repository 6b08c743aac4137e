"""
Internal validity indices and the centralized k-means oracle.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics import calinski_harabasz_score, silhouette_score

from app.core.dataset import DataMatrix
from app.core.errors import SeedingError, UndefinedIndexError
from app.core.seeding import kmeanspp_init

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabeledEvaluation:
    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        data = self.data.values if isinstance(self.data, DataMatrix) else np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        labels = np.asarray(self.labels)
        if labels.shape != (data.shape[0],):
            raise ValueError(f"{labels.size} labels for {data.shape[0]} rows")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def k_hat(self) -> int:
        return int(np.unique(self.labels).size)

    @property
    def n(self) -> int:
        return self.data.shape[0]


def silhouette(ev: LabeledEvaluation) -> float:
    """Mean silhouette over all points; singleton clusters contribute 0."""
    if ev.k_hat < 2:
        raise UndefinedIndexError(f"silhouette needs at least 2 clusters, got {ev.k_hat}")
    if ev.k_hat > ev.n - 1:
        raise UndefinedIndexError(f"silhouette needs fewer clusters than n - 1 = {ev.n - 1}, got {ev.k_hat}")
    return float(silhouette_score(ev.data, ev.labels, metric="euclidean"))


def within_cluster_ss(points: np.ndarray, labels: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    total = 0.0
    for lab in np.unique(labels):
        members = points[labels == lab]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def calinski_harabasz(ev: LabeledEvaluation) -> float:
    """Between/within dispersion ratio; +inf when every cluster is a single point mass."""
    if ev.k_hat < 2:
        raise UndefinedIndexError(f"Calinski-Harabasz needs at least 2 clusters, got {ev.k_hat}")
    if ev.k_hat >= ev.n:
        raise UndefinedIndexError(f"Calinski-Harabasz needs n > k, got n = {ev.n}, k = {ev.k_hat}")
    if within_cluster_ss(ev.data, ev.labels) == 0.0:
        return float("inf")
    return float(calinski_harabasz_score(ev.data, ev.labels))


# ---------------------------------------------------------------------------
# Centralized k-means oracle
# ---------------------------------------------------------------------------

def centralized_kmeans(m, k: int, rng_seed: int, max_iter: int = 300,
                       init: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeding (or explicit ``init``) then Lloyd to a fixpoint.

    An empty cluster is re-seeded at the point farthest from its assigned
    center before the next assignment step.
    """
    points = m.values if isinstance(m, DataMatrix) else np.asarray(m, dtype=float)
    n = points.shape[0]
    if k < 1 or k > n:
        raise SeedingError(f"k must be in [1, {n}], got {k}")
    if init is None:
        centers = kmeanspp_init(points, k, rng_seed).seeds.copy()
    else:
        centers = np.array(init, dtype=float)
        if centers.shape != (k, points.shape[1]):
            raise ValueError(f"init must have shape {(k, points.shape[1])}, got {centers.shape}")

    labels = None
    for step in range(max_iter):
        d2 = cdist(points, centers, "sqeuclidean")
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        sizes = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(sizes > 0):
            centers[c] = points[labels == c].mean(axis=0)
        empty = np.flatnonzero(sizes == 0)
        if empty.size:
            dist = np.sum((points - centers[labels]) ** 2, axis=1)
            far = np.argsort(-dist, kind="stable")
            for c, idx in zip(empty, far):
                centers[c] = points[idx]
            logger.debug("k-means step %d re-seeded %d empty cluster(s)", step, empty.size)

    if labels is None:
        labels = np.argmin(cdist(points, centers, "sqeuclidean"), axis=1)
    return centers, labels
