"""
End-to-end asynchronous federated clustering run.

Clients seed locally with k-means++, the server pools those seeds into the
global seed set, and then every iteration a sampled subset of clients runs a
local round against the current seeds while the server folds the uploads in.
When the objective settles, homogenized seeds are merged into the learned
cluster count and every object is labelled by its nearest merged center.
"""

import logging
import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from app.config.run_config import ParticipationSchedule, RunConfig
from app.core import rng as rngs
from app.core.client import ClientUpload, client_round
from app.core.dataset import ClientDataset, DataMatrix, partition_noniid
from app.core.errors import PartitionError, UndefinedIndexError
from app.core.metrics import LabeledEvaluation, calinski_harabasz, silhouette
from app.core.seeding import SeedSet, kmeanspp_init, server_pool_init
from app.core.server import ServerState, server_round

logger = logging.getLogger(__name__)

# Empty participant draws are retried this many times before forcing a client in
EMPTY_DRAW_RETRIES = 100

# Guards the relative-change denominator when Z is (close to) zero
CONVERGENCE_EPS = 1e-12


@dataclass(eq=False)
class ClusterReport:
    final_seeds: SeedSet
    merged_centers: np.ndarray
    seed_to_cluster: np.ndarray
    learned_k: int
    assignment: np.ndarray
    row_index: np.ndarray
    client_sizes: dict
    z_history: list
    z_configured_history: list
    degenerate_rounds: list
    participants: list
    objective_trace: list
    seed_trajectories: list
    metrics: dict
    iterations_run: int
    converged: bool
    k0: int
    merge_radius: float
    rng_seed: int
    iteration_seconds: list = field(default_factory=list)

    def assignment_in_row_order(self) -> np.ndarray:
        """Labels scattered back to the global row order of the input data."""
        labels = np.empty_like(self.assignment)
        labels[self.row_index] = self.assignment
        return labels

    def to_dict(self) -> dict:
        # wall-clock timings are left out so reruns serialize identically
        return {
            "k0": self.k0,
            "learned_k": self.learned_k,
            "converged": self.converged,
            "iterations_run": self.iterations_run,
            "rng_seed": self.rng_seed,
            "merge_radius": self.merge_radius,
            "metrics": dict(self.metrics),
            "client_sizes": {str(g): int(n) for g, n in self.client_sizes.items()},
            "final_seeds": {
                "ids": self.final_seeds.ids.tolist(),
                "positions": self.final_seeds.seeds.tolist(),
            },
            "merged_centers": self.merged_centers.tolist(),
            "seed_to_cluster": self.seed_to_cluster.tolist(),
            "z_history": list(self.z_history),
            "z_configured_history": list(self.z_configured_history),
            "degenerate_rounds": list(self.degenerate_rounds),
            "participants": [list(p) for p in self.participants],
            "objective_trace": list(self.objective_trace),
            "assignment": self.assignment_in_row_order().tolist(),
        }


# ---------------------------------------------------------------------------
# Participation
# ---------------------------------------------------------------------------

def sample_participants(schedule: ParticipationSchedule, iteration: int) -> tuple:
    """Client ids (ascending) drawn independently with their probabilities.

    The draw for an iteration depends only on (schedule seed, iteration). An
    empty draw is retried when ``resample_empty`` is set; after
    EMPTY_DRAW_RETRIES failures the most likely client is forced in.
    """
    probs = np.asarray(schedule.probs)
    gen = rngs.make_rng(schedule.rng_seed, rngs.STREAM_SCHEDULE, iteration)
    for _ in range(EMPTY_DRAW_RETRIES):
        picked = np.flatnonzero(gen.random(probs.size) < probs)
        if picked.size or not schedule.resample_empty:
            return tuple(int(g) + 1 for g in picked)
    return (int(np.argmax(probs)) + 1,)


# ---------------------------------------------------------------------------
# Convergence
# ---------------------------------------------------------------------------

def check_convergence(z_history: list, conv_rel_tol: float, conv_patience: int,
                      max_iter: int | None = None, degenerate_rounds=()) -> bool:
    """True once the last ``conv_patience`` relative changes of Z are all below tol.

    The curve is not expected to decrease monotonically, so a single small
    step is not enough. Entries of ``degenerate_rounds`` (1-based round
    numbers) only repeat the previous Z and are left out of the window. With
    ``max_iter`` given, reaching that many entries also counts.
    """
    if max_iter is not None and len(z_history) >= max_iter:
        return True
    skipped = set(degenerate_rounds)
    measured = [z for i, z in enumerate(z_history, start=1) if i not in skipped]
    if len(measured) <= conv_patience:
        return False
    recent = np.asarray(measured[-(conv_patience + 1):], dtype=float)
    prev, curr = recent[:-1], recent[1:]
    rel = np.abs(curr - prev) / np.maximum(np.abs(prev), CONVERGENCE_EPS)
    return bool(np.all(rel < conv_rel_tol))


# ---------------------------------------------------------------------------
# Merging and final labels
# ---------------------------------------------------------------------------

def merge_seeds(M, merge_radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-linkage grouping of seeds closer than ``merge_radius``.

    Returns the group means and a seed -> group map; groups are numbered in
    order of their first seed.
    """
    if not merge_radius > 0:
        raise ValueError(f"merge_radius must be > 0, got {merge_radius}")
    seeds = M.seeds if isinstance(M, SeedSet) else np.asarray(M, dtype=float)
    if seeds.shape[0] == 1:
        return seeds.copy(), np.zeros(1, dtype=int)

    raw = fcluster(linkage(seeds, method="single", metric="euclidean"),
                   t=merge_radius, criterion="distance")
    relabel: dict[int, int] = {}
    mapping = np.array([relabel.setdefault(int(c), len(relabel)) for c in raw], dtype=int)
    centers = np.vstack([seeds[mapping == g].mean(axis=0) for g in range(len(relabel))])
    return centers, mapping


def final_assignment(clients: list[ClientDataset], merged_centers: np.ndarray) -> np.ndarray:
    """Nearest merged center per object, concatenated in client-id / row order."""
    centers = np.asarray(merged_centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise ValueError("need at least one merged center")
    labels = []
    for client in sorted(clients, key=lambda c: c.client_id):
        d2 = np.sum((client.data.values[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels.append(np.argmin(d2, axis=1))
    return np.concatenate(labels) if labels else np.empty(0, dtype=int)


# ---------------------------------------------------------------------------
# Run
# ---------------------------------------------------------------------------

def _prepare_clients(data: DataMatrix, config: RunConfig, clients) -> list[ClientDataset]:
    if clients is None:
        seed = config.partition_seed
        if seed is None:
            seed = rngs.derive_seed(config.rng_seed, rngs.STREAM_PARTITION)
        return partition_noniid(data, config.clients, seed)
    clients = sorted(clients, key=lambda c: c.client_id)
    ids = [c.client_id for c in clients]
    if ids != list(range(1, config.clients + 1)):
        raise PartitionError(f"expected client ids 1..{config.clients}, got {ids}")
    index = np.concatenate([c.row_index for c in clients])
    if np.array_equal(np.sort(index), np.arange(index.size)):
        return clients
    # local row indices only: number rows consecutively in client order
    renumbered, start = [], 0
    for c in clients:
        renumbered.append(ClientDataset(c.client_id, c.data, np.arange(start, start + c.size)))
        start += c.size
    return renumbered


def _collect_uploads(clients: dict, participants: tuple, snapshot: SeedSet,
                     config: RunConfig, iteration: int) -> list[ClientUpload]:
    """Run the participants' local rounds and drain their uploads in client order."""
    buffer: queue.SimpleQueue = queue.SimpleQueue()

    def _work(client_id: int):
        shuffle_seed = None
        if config.shuffle_rows:
            shuffle_seed = rngs.derive_seed(config.rng_seed, rngs.STREAM_SHUFFLE, iteration, client_id)
        buffer.put(client_round(clients[client_id], snapshot, config.eta, iteration, shuffle_seed))

    if config.workers > 1 and len(participants) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for future in [pool.submit(_work, g) for g in participants]:
                future.result()
    else:
        for g in participants:
            _work(g)

    uploads = []
    while not buffer.empty():
        uploads.append(buffer.get())
    return sorted(uploads, key=lambda u: u.client_id)


def _score(points: np.ndarray, labels: np.ndarray) -> dict:
    ev = LabeledEvaluation(points, labels)
    scores = {}
    for name, index in (("sc", silhouette), ("ch", calinski_harabasz)):
        try:
            scores[name] = float(index(ev))
        except UndefinedIndexError as e:
            logger.warning("%s undefined for this labelling: %s", name.upper(), e)
            scores[name] = None
    return scores


def run(data: DataMatrix, config: RunConfig, clients: list[ClientDataset] | None = None) -> ClusterReport:
    """Execute the full protocol on normalized data; deterministic given config.rng_seed."""
    if np.any(data.values < 0.0) or np.any(data.values > 1.0):
        raise ValueError("run expects min-max normalized data (all values in [0, 1])")

    clients = _prepare_clients(data, config, clients)
    by_id = {c.client_id: c for c in clients}
    logger.info("Run start: %d client(s) %s, k0 = %d, xi = %g, eta = %g",
                len(clients), [c.size for c in clients], config.k0, config.xi, config.eta)

    client_sets = [
        kmeanspp_init(c.data, min(config.k0, c.size),
                      rngs.derive_seed(config.rng_seed, rngs.STREAM_CLIENT_INIT, c.client_id))
        for c in clients
    ]
    seeds = server_pool_init(client_sets, config.k0,
                             rngs.derive_seed(config.rng_seed, rngs.STREAM_SERVER_INIT))
    state = ServerState.initial(seeds, config.clients)

    trajectories = [seeds.seeds.copy()]
    participants_log = []
    objective_trace = []
    timings = []
    converged = False
    for iteration in range(1, config.max_iter + 1):
        started = time.perf_counter()
        participants = sample_participants(config.schedule, iteration)
        participants_log.append(participants)
        if not participants:
            logger.debug("Iteration %d: no client uploaded", iteration)
            trajectories.append(state.seeds.seeds.copy())
            objective_trace.append(state.z_history[-1] if state.z_history else float("nan"))
            timings.append(time.perf_counter() - started)
            continue

        uploads = _collect_uploads(by_id, participants, state.seeds, config, iteration)
        state = server_round(state, uploads, config)
        trajectories.append(state.seeds.seeds.copy())
        objective_trace.append(state.z_history[-1])
        timings.append(time.perf_counter() - started)

        if check_convergence(state.z_history, config.conv_rel_tol, config.conv_patience,
                             degenerate_rounds=state.degenerate_rounds):
            converged = True
            logger.info("Converged after %d iteration(s)", iteration)
            break
    else:
        if config.max_iter:
            logger.info("Stopped at max_iter = %d without convergence", config.max_iter)

    radius = config.resolved_merge_radius(data.cols)
    merged, mapping = merge_seeds(state.seeds, radius)
    labels = final_assignment(clients, merged)
    stacked = np.vstack([c.data.values for c in clients])
    metrics = _score(stacked, labels)
    logger.info("Learned k = %d from k0 = %d (SC = %s, CH = %s)",
                merged.shape[0], config.k0, metrics["sc"], metrics["ch"])

    return ClusterReport(
        final_seeds=state.seeds,
        merged_centers=merged,
        seed_to_cluster=mapping,
        learned_k=int(merged.shape[0]),
        assignment=labels,
        row_index=np.concatenate([c.row_index for c in clients]),
        client_sizes={c.client_id: c.size for c in clients},
        z_history=list(state.z_history),
        z_configured_history=list(state.z_configured_history),
        degenerate_rounds=list(state.degenerate_rounds),
        participants=participants_log,
        objective_trace=objective_trace,
        seed_trajectories=trajectories,
        metrics=metrics,
        iterations_run=len(participants_log),
        converged=converged,
        k0=config.k0,
        merge_radius=radius,
        rng_seed=config.rng_seed,
        iteration_seconds=timings,
    )
