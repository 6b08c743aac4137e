"""
Dataset ingestion: CSV loading, min-max scaling, synthetic Gaussian blobs,
and non-IID client partitioning.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from app.core.errors import DataLoadError, PartitionError

logger = logging.getLogger(__name__)

# Empty clusters in the partitioning k-means trigger a re-run with a new seed
PARTITION_RETRIES = 10


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """n x d real matrix with optional ground-truth labels (evaluation only)."""
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"DataMatrix needs an n x d array with n, d >= 1, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (values.shape[0],):
                raise ValueError("labels must have one entry per row")
            object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def take(self, index: np.ndarray) -> "DataMatrix":
        labels = self.labels[index] if self.labels is not None else None
        return DataMatrix(self.values[index], labels)


@dataclass(frozen=True, eq=False)
class ClientDataset:
    """The subset of rows held by one client; row_index maps back to the global matrix."""
    client_id: int
    data: DataMatrix
    row_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.row_index is None:
            object.__setattr__(self, "row_index", np.arange(self.data.rows))

    @property
    def size(self) -> int:
        return self.data.rows


@dataclass(frozen=True)
class SynthSpec:
    centers: tuple
    stddevs: tuple
    counts: tuple
    rng_seed: int = 0

    def __post_init__(self):
        if not self.centers:
            raise ValueError("SynthSpec needs at least one center")
        if not (len(self.centers) == len(self.stddevs) == len(self.counts)):
            raise ValueError("centers, stddevs and counts must have the same length")
        dims = {len(np.atleast_1d(c)) for c in self.centers}
        if len(dims) != 1:
            raise ValueError("all centers must share one dimension")
        if any(int(c) < 1 for c in self.counts):
            raise ValueError("every component count must be >= 1")
        if any(not s > 0 for s in self.stddevs):
            raise ValueError("every stddev must be > 0")

    @property
    def dim(self) -> int:
        return len(np.atleast_1d(self.centers[0]))


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_csv(path: str, has_header: bool = True, label_col: int | str | None = None) -> DataMatrix:
    """Load a numeric CSV file.

    Rows with a missing cell are dropped (the count is logged as a warning);
    a present but non-numeric cell is an error. ``label_col`` selects an
    integer label column by position or header name.
    """
    if not os.path.isfile(path):
        raise DataLoadError(f"Cannot read dataset: {path} does not exist")
    try:
        frame = pd.read_csv(
            path,
            header=0 if has_header else None,
            dtype=str,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise DataLoadError(f"Dataset {path} has zero usable rows")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataLoadError(f"Cannot read dataset {path}: {e}")

    frame = frame.apply(lambda col: col.str.strip())
    frame = frame.replace("", np.nan)

    complete = frame.notna().all(axis=1)
    dropped = int((~complete).sum())
    if dropped:
        logger.warning("Dropped %d row(s) with missing values from %s", dropped, path)
    frame = frame[complete]
    if frame.empty:
        raise DataLoadError(f"Dataset {path} has zero usable rows")

    label_key = _resolve_label_column(frame, label_col)
    numeric = {}
    for col in frame.columns:
        parsed = pd.to_numeric(frame[col], errors="coerce")
        bad = parsed.isna() | ~np.isfinite(parsed.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            first = frame[col][bad].iloc[0]
            raise DataLoadError(f"non-numeric cell {first!r} in column {col!r} of {path}")
        numeric[col] = parsed

    labels = None
    if label_key is not None:
        raw = numeric.pop(label_key).to_numpy(dtype=float)
        if not np.all(raw == np.round(raw)):
            raise DataLoadError(f"label column {label_key!r} of {path} holds non-integer values")
        labels = raw.astype(int)
    if not numeric:
        raise DataLoadError(f"Dataset {path} has no data columns")

    values = np.column_stack([numeric[c].to_numpy(dtype=float) for c in numeric])
    logger.info("Loaded %s: %d rows x %d columns", path, values.shape[0], values.shape[1])
    return DataMatrix(values, labels)


def _resolve_label_column(frame: pd.DataFrame, label_col):
    if label_col is None:
        return None
    columns = list(frame.columns)
    if label_col in columns:
        return label_col
    if isinstance(label_col, int) or (isinstance(label_col, str) and label_col.lstrip("-").isdigit()):
        pos = int(label_col)
        if -len(columns) <= pos < len(columns):
            return columns[pos]
    raise DataLoadError(f"label column {label_col!r} not found")


def load_labels(path: str, has_header: bool = True) -> np.ndarray:
    """Integer labels from the ``label`` column, or the last column if there is none."""
    if not os.path.isfile(path):
        raise DataLoadError(f"Cannot read labels: {path} does not exist")
    try:
        frame = pd.read_csv(path, header=0 if has_header else None, skipinitialspace=True)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataLoadError(f"Cannot read labels {path}: {e}")
    if frame.empty:
        raise DataLoadError(f"Label file {path} has zero rows")
    column = frame["label"] if "label" in frame.columns else frame.iloc[:, -1]
    raw = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
    if np.isnan(raw).any() or not np.all(raw == np.round(raw)):
        raise DataLoadError(f"Label file {path} holds missing or non-integer labels")
    return raw.astype(int)


def save_csv(m: DataMatrix, path: str) -> str:
    """Write dim_0..dim_{d-1} (+ label) with a header row."""
    frame = pd.DataFrame(m.values, columns=[f"dim_{j}" for j in range(m.cols)])
    if m.labels is not None:
        frame["label"] = m.labels
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def minmax_normalize(m: DataMatrix) -> DataMatrix:
    """Scale each column to [0, 1]; a constant column maps to all zeros."""
    lo = m.values.min(axis=0)
    span = m.values.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (m.values - lo) / safe, 0.0)
    return DataMatrix(np.clip(scaled, 0.0, 1.0), m.labels)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def synth_gaussian(spec: SynthSpec) -> DataMatrix:
    """Draw isotropic Gaussian components; labels are component indices.

    Rows are shuffled with the same generator so that the output does not
    arrive sorted by component. Normalization is left to the caller.
    """
    rng = np.random.default_rng(spec.rng_seed)
    blocks, labels = [], []
    for idx, (center, std, count) in enumerate(zip(spec.centers, spec.stddevs, spec.counts)):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        blocks.append(rng.normal(loc=center, scale=float(std), size=(int(count), center.size)))
        labels.append(np.full(int(count), idx, dtype=int))
    values = np.vstack(blocks)
    labels = np.concatenate(labels)
    order = rng.permutation(values.shape[0])
    return DataMatrix(values[order], labels[order])


def make_blob_spec(blobs: int, n: int, d: int, rng_seed: int = 0,
                   stddev: float = 0.5, separation: float = 4.0, box: float = 10.0) -> SynthSpec:
    """Build a SynthSpec with ``blobs`` well-separated centers in [0, box]^d.

    Centers are drawn by seeded rejection sampling until every pair is at
    least ``separation`` apart; sizes split ``n`` as evenly as possible.
    """
    if blobs < 1 or n < blobs or d < 1:
        raise ValueError("need blobs >= 1, n >= blobs and d >= 1")
    rng = np.random.default_rng(rng_seed)
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < blobs:
        attempts += 1
        if attempts > 10000:
            raise ValueError(f"cannot place {blobs} centers {separation} apart in [0, {box}]^{d}")
        candidate = rng.uniform(0.0, box, size=d)
        if all(np.linalg.norm(candidate - c) >= separation for c in centers):
            centers.append(candidate)
    base, extra = divmod(n, blobs)
    counts = tuple(base + (1 if i < extra else 0) for i in range(blobs))
    return SynthSpec(
        centers=tuple(tuple(float(v) for v in c) for c in centers),
        stddevs=(float(stddev),) * blobs,
        counts=counts,
        rng_seed=rng_seed,
    )


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def partition_noniid(m: DataMatrix, p: int, rng_seed: int) -> list[ClientDataset]:
    """Split rows into p clients by running k-means with k = p.

    Each k-means cluster becomes one client, so clients hold non-overlapping
    regions of the data. Client ids are 1..p; rows keep their global order
    inside each client.
    """
    from app.core.metrics import centralized_kmeans

    if p < 1:
        raise PartitionError(f"client count must be >= 1, got {p}")
    if p > m.rows:
        raise PartitionError(f"client count {p} exceeds row count {m.rows}")

    if p == 1:
        return [ClientDataset(1, m, np.arange(m.rows))]

    for attempt in range(PARTITION_RETRIES + 1):
        _, labels = centralized_kmeans(m, p, rng_seed + attempt)
        sizes = np.bincount(labels, minlength=p)
        if np.all(sizes > 0):
            break
        logger.info("Partition attempt %d left %d empty client(s); retrying",
                    attempt + 1, int((sizes == 0).sum()))
    else:
        raise PartitionError(f"could not split data into {p} nonempty clients")

    clients = []
    for g in range(p):
        index = np.flatnonzero(labels == g)
        clients.append(ClientDataset(g + 1, m.take(index), index))
    logger.debug("Partitioned %d rows into client sizes %s", m.rows, sizes.tolist())
    return clients
