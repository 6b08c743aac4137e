"""
Server-side seeds interaction.

The server keeps the global seeds, each client's communication frequency and
balance weight, and the objective history. Every upload's update intensities
are replayed against the seeds: the winner seed and every seed inside its
cooperative radius take a damped step toward the object behind the
intensity. Local centers and dispersions are aggregated into a DBI-shaped
objective that is used only to judge convergence.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from app.config.run_config import RunConfig
from app.core.client import ClientUpload
from app.core.errors import AggregationError, SeedDivergenceError
from app.core.seeding import SeedSet

logger = logging.getLogger(__name__)

# Seeds must stay inside [BOX_LOW, BOX_HIGH]^d on normalized data
BOX_LOW = -1.0
BOX_HIGH = 2.0


@dataclass(eq=False)
class ServerState:
    seeds: SeedSet
    theta: np.ndarray
    w: np.ndarray
    z_history: list = field(default_factory=list)
    z_configured_history: list = field(default_factory=list)
    degenerate_rounds: list = field(default_factory=list)
    iteration: int = 0

    @classmethod
    def initial(cls, seeds: SeedSet, p: int) -> "ServerState":
        # no frequency information yet: every client starts at w = 1
        return cls(seeds=seeds, theta=np.zeros(p, dtype=int), w=np.ones(p))


@dataclass(frozen=True, eq=False)
class AggregatedSummary:
    B: np.ndarray
    z: np.ndarray
    support: np.ndarray

    @property
    def supported(self) -> np.ndarray:
        return self.support > 0


class ObjectiveValue(NamedTuple):
    value: float
    value_configured_k: float
    supported: int


# ---------------------------------------------------------------------------
# Balance weights
# ---------------------------------------------------------------------------

def balance_weights(theta: np.ndarray, xi: float) -> np.ndarray:
    """w_g = xi / (xi + theta_g / sum(theta)); all ones before anyone uploads."""
    if not xi > 0:
        raise ValueError(f"xi must be > 0, got {xi}")
    theta = np.asarray(theta, dtype=float)
    total = theta.sum()
    if total == 0 or np.isinf(xi):
        return np.ones(theta.shape[0])
    share = theta / total
    return xi / (xi + share)


# ---------------------------------------------------------------------------
# Aggregation and objective
# ---------------------------------------------------------------------------

def aggregate(uploads: list[ClientUpload], w: np.ndarray, literal: bool = False) -> AggregatedSummary:
    """Balance-weighted mean of the clients' local centers and contributions.

    Clients with o_r = 0 are skipped for seed r. By default the weighted sum
    is divided by sum_j w_j o_rj (a convex combination). ``literal=True``
    divides by sum_j o_rj instead, which shrinks the result whenever a
    weight is below one.
    """
    if not uploads:
        raise AggregationError("cannot aggregate an empty upload list")
    w = np.asarray(w, dtype=float)
    k, d = uploads[0].B.shape

    num_b = np.zeros((k, d))
    num_z = np.zeros(k)
    weighted = np.zeros(k)
    counted = np.zeros(k)
    support = np.zeros(k, dtype=int)
    for up in sorted(uploads, key=lambda u: u.client_id):
        if up.B.shape != (k, d):
            raise AggregationError(f"upload from client {up.client_id} has shape {up.B.shape}, expected {(k, d)}")
        present = up.present
        coeff = w[up.client_id - 1] * up.o[present]
        num_b[present] += coeff[:, None] * up.B[present]
        num_z[present] += coeff * up.z[present]
        weighted[present] += coeff
        counted[present] += up.o[present]
        support[present] += 1

    denom = counted if literal else weighted
    B = np.full((k, d), np.nan)
    z = np.full(k, np.nan)
    ok = support > 0
    B[ok] = num_b[ok] / denom[ok, None]
    z[ok] = num_z[ok] / denom[ok]
    return AggregatedSummary(B, z, support)


def global_objective(agg: AggregatedSummary, k: int | None = None,
                     dup_threshold: float = 1e-6) -> ObjectiveValue | None:
    """Mean over seeds of the worst (z_l + z_r) / ||b_l - b_r||^2 ratio.

    Only supported seeds take part. Pairs closer than ``dup_threshold``
    (squared distance) are not admissible; a seed without an admissible
    partner contributes 0. Returns None for a degenerate round (fewer than
    two supported seeds, or no admissible pair at all).
    """
    idx = np.flatnonzero(agg.supported)
    if idx.size < 2:
        return None
    B = agg.B[idx]
    z = agg.z[idx]
    d2 = cdist(B, B, "sqeuclidean")
    admissible = d2 >= dup_threshold
    np.fill_diagonal(admissible, False)
    if not admissible.any():
        return None

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (z[:, None] + z[None, :]) / d2
    ratio = np.where(admissible, ratio, -np.inf)
    worst = ratio.max(axis=1)
    worst[~admissible.any(axis=1)] = 0.0

    total = float(worst.sum())
    k_configured = k if k is not None else agg.B.shape[0]
    return ObjectiveValue(total / idx.size, total / k_configured, int(idx.size))


# ---------------------------------------------------------------------------
# Seed interaction
# ---------------------------------------------------------------------------

def _positions(M) -> np.ndarray:
    return M.seeds if isinstance(M, SeedSet) else M


def cooperative_set(M, r: int, v: np.ndarray, w_g: float, eta: float) -> np.ndarray:
    """Indices l with ||m_r - m_l||^2 <= ||w_g v / eta||^2 (always holds r)."""
    seeds = _positions(M)
    radius2 = float(np.sum((w_g * np.asarray(v, dtype=float) / eta) ** 2))
    d2 = np.sum((seeds - seeds[r]) ** 2, axis=1)
    return np.flatnonzero(d2 <= radius2)


def _move_members(seeds: np.ndarray, members: np.ndarray, x: np.ndarray, w_g: float, eta: float):
    seeds[members] += w_g * eta * (x - seeds[members])


def apply_seed_update(M: SeedSet, C_r: np.ndarray, r: int, v: np.ndarray,
                      w_g: float, eta: float, origin: np.ndarray | None = None) -> SeedSet:
    """Step every u in C_r toward the object behind v: m_u += w_g eta (x - m_u).

    The object is rebuilt as x = origin + v / eta, where ``origin`` is the
    winner position the client computed v against (defaults to the current
    m_r). While m_r still sits there this is m_u += w_g v + w_g eta (m_r - m_u).
    """
    seeds = np.array(M.seeds, dtype=float)
    anchor = seeds[r] if origin is None else np.asarray(origin, dtype=float)
    x = anchor + np.asarray(v, dtype=float) / eta
    _move_members(seeds, np.asarray(C_r, dtype=int), x, w_g, eta)
    return M.replace(seeds)


def _check_sanity_box(seeds: np.ndarray, iteration: int):
    if not np.all(np.isfinite(seeds)):
        raise SeedDivergenceError(f"non-finite seed after round {iteration}")
    if np.any(seeds < BOX_LOW) or np.any(seeds > BOX_HIGH):
        raise SeedDivergenceError(
            f"seed left the [{BOX_LOW}, {BOX_HIGH}] box after round {iteration}; "
            "is the data normalized and eta * w <= 1?"
        )


# ---------------------------------------------------------------------------
# Round
# ---------------------------------------------------------------------------

def server_round(state: ServerState, uploads: list[ClientUpload], config: RunConfig) -> ServerState:
    """Fold one iteration's uploads into a new ServerState.

    Uploads are replayed in canonical order (client id, seed index, stored
    vector order) with each client's weight from the previous round. Each
    intensity moves its cooperative set toward the object it came from,
    rebuilt from the broadcast winner position. The balance weights for the
    next round are recomputed at the end.
    """
    if not uploads:
        raise AggregationError("server round needs at least one upload")
    uploads = sorted(uploads, key=lambda u: u.client_id)

    theta = state.theta.copy()
    for up in uploads:
        theta[up.client_id - 1] += 1

    w_prev = state.w if config.balance else np.ones_like(state.w)
    eta = config.eta
    broadcast = state.seeds.seeds
    seeds = np.array(broadcast, dtype=float)
    for up in uploads:
        w_g = float(w_prev[up.client_id - 1])
        vectors, owners = up.R.vectors, up.R.owners
        # every v was computed against the broadcast seeds, not the moving ones
        objects = broadcast[owners] + vectors / eta
        for i in up.R.canonical_order():
            r = int(owners[i])
            members = cooperative_set(seeds, r, vectors[i], w_g, eta)
            _move_members(seeds, members, objects[i], w_g, eta)

    iteration = state.iteration + 1
    _check_sanity_box(seeds, iteration)

    z_history = list(state.z_history)
    z_configured = list(state.z_configured_history)
    degenerate = list(state.degenerate_rounds)
    agg = aggregate(uploads, w_prev, literal=config.literal_eq9)
    objective = global_objective(agg, k=state.seeds.k, dup_threshold=config.dup_threshold)
    if objective is None:
        logger.warning("Round %d is degenerate (fewer than two distinct supported seeds); keeping previous Z",
                       iteration)
        degenerate.append(iteration)
        z_history.append(z_history[-1] if z_history else float("nan"))
        z_configured.append(z_configured[-1] if z_configured else float("nan"))
    else:
        z_history.append(objective.value)
        z_configured.append(objective.value_configured_k)

    w_next = balance_weights(theta, config.xi) if config.balance else np.ones(theta.shape[0])
    logger.debug("Round %d: clients %s, Z = %.6g, w = %s", iteration,
                 [u.client_id for u in uploads], z_history[-1], np.round(w_next, 4).tolist())

    return ServerState(
        seeds=state.seeds.replace(seeds),
        theta=theta,
        w=w_next,
        z_history=z_history,
        z_configured_history=z_configured,
        degenerate_rounds=degenerate,
        iteration=iteration,
    )
