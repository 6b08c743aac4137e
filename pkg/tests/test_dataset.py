import logging

import numpy as np
import pytest

from app.core.dataset import (
    ClientDataset, DataMatrix, SynthSpec, load_csv, load_labels, make_blob_spec,
    minmax_normalize, partition_noniid, save_csv, synth_gaussian,
)
from app.core.errors import DataLoadError, PartitionError


# ---------------------------------------------------------------------------
# load_csv
# ---------------------------------------------------------------------------

def test_load_csv_drops_incomplete_rows(sample_csv, caplog):
    with caplog.at_level(logging.WARNING):
        m = load_csv(str(sample_csv), has_header=True, label_col="label")
    assert m.rows == 3
    assert m.cols == 2
    np.testing.assert_array_equal(m.values, [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    np.testing.assert_array_equal(m.labels, [0, 1, 2])
    assert "Dropped 1 row" in caplog.text


def test_load_csv_label_by_position(sample_csv):
    m = load_csv(str(sample_csv), label_col=-1)
    np.testing.assert_array_equal(m.labels, [0, 1, 2])
    assert m.cols == 2


def test_load_csv_without_header(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    m = load_csv(str(path), has_header=False)
    np.testing.assert_array_equal(m.values, [[1.0, 2.0], [3.0, 4.0]])
    assert m.labels is None


def test_load_csv_rejects_non_numeric(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\nx,4\n", encoding="utf-8")
    with pytest.raises(DataLoadError, match="non-numeric"):
        load_csv(str(path))


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataLoadError, match="does not exist"):
        load_csv(str(tmp_path / "nope.csv"))


def test_load_csv_zero_usable_rows(tmp_path):
    path = tmp_path / "holes.csv"
    path.write_text("a,b\n1,\n,2\n", encoding="utf-8")
    with pytest.raises(DataLoadError, match="zero usable rows"):
        load_csv(str(path))


def test_load_csv_unknown_label_column(sample_csv):
    with pytest.raises(DataLoadError, match="not found"):
        load_csv(str(sample_csv), label_col="cluster")


def test_save_and_load_labels(tmp_path):
    m = DataMatrix(np.array([[0.1, 0.2], [0.3, 0.4]]), np.array([1, 0]))
    path = save_csv(m, str(tmp_path / "out" / "m.csv"))
    header = open(path, encoding="utf-8").readline().strip()
    assert header == "dim_0,dim_1,label"
    np.testing.assert_array_equal(load_labels(path), [1, 0])


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def test_minmax_normalize_ranges_and_constant_column():
    m = DataMatrix(np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]]))
    out = minmax_normalize(m)
    np.testing.assert_allclose(out.values[:, 0], [0.0, 1.0, 0.5])
    np.testing.assert_array_equal(out.values[:, 1], [0.0, 0.0, 0.0])
    assert out.values.min() >= 0.0 and out.values.max() <= 1.0


def test_minmax_keeps_labels():
    m = DataMatrix(np.array([[0.0], [4.0]]), np.array([3, 7]))
    np.testing.assert_array_equal(minmax_normalize(m).labels, [3, 7])


def test_minmax_normalize_is_idempotent():
    rng = np.random.default_rng(5)
    values = rng.normal(3.0, 2.0, (50, 3))
    values[:, 2] = 4.0
    once = minmax_normalize(DataMatrix(values))
    twice = minmax_normalize(once)
    np.testing.assert_array_equal(twice.values, once.values)


def test_minmax_leaves_unit_range_column_unchanged():
    m = DataMatrix(np.array([[0.0], [0.25], [1.0], [0.6]]))
    np.testing.assert_array_equal(minmax_normalize(m).values, m.values)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def test_synth_is_deterministic():
    spec = SynthSpec(centers=((0.0, 0.0), (5.0, 5.0)), stddevs=(0.3, 0.3), counts=(20, 30), rng_seed=4)
    a, b = synth_gaussian(spec), synth_gaussian(spec)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.rows == 50
    assert np.bincount(a.labels).tolist() == [20, 30]


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(centers=((0.0,),), stddevs=(0.0,), counts=(5,))
    with pytest.raises(ValueError):
        SynthSpec(centers=((0.0,), (1.0, 2.0)), stddevs=(1.0, 1.0), counts=(5, 5))


def test_make_blob_spec_separation_and_sizes():
    spec = make_blob_spec(4, 2301, 2, rng_seed=7, separation=4.0)
    centers = np.array(spec.centers)
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.linalg.norm(centers[i] - centers[j]) >= 4.0
    assert sum(spec.counts) == 2301
    assert max(spec.counts) - min(spec.counts) <= 1


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def _assert_partition(clients, n):
    rows = np.concatenate([c.row_index for c in clients])
    assert sorted(rows.tolist()) == list(range(n))
    assert sum(c.size for c in clients) == n


def test_partition_two_blobs_one_per_client(two_blobs_1d):
    clients = partition_noniid(two_blobs_1d, 2, rng_seed=0)
    assert [c.client_id for c in clients] == [1, 2]
    _assert_partition(clients, 100)
    for c in clients:
        assert c.size == 50
        assert np.unique(c.data.labels).size == 1


def test_partition_single_client(four_blobs):
    (client,) = partition_noniid(four_blobs, 1, rng_seed=3)
    assert client.client_id == 1
    np.testing.assert_array_equal(client.data.values, four_blobs.values)


def test_partition_singletons():
    m = DataMatrix(np.array([[0.0], [0.2], [0.5], [0.7], [1.0]]))
    clients = partition_noniid(m, 5, rng_seed=1)
    assert all(c.size == 1 for c in clients)
    _assert_partition(clients, 5)


def test_partition_rows_match_global_data(four_blobs):
    clients = partition_noniid(four_blobs, 3, rng_seed=9)
    _assert_partition(clients, four_blobs.rows)
    for c in clients:
        np.testing.assert_array_equal(c.data.values, four_blobs.values[c.row_index])


def test_partition_rejects_bad_client_count(four_blobs):
    with pytest.raises(PartitionError):
        partition_noniid(four_blobs, 0, rng_seed=0)
    with pytest.raises(PartitionError):
        partition_noniid(DataMatrix(np.zeros((2, 1))), 3, rng_seed=0)


def test_client_dataset_default_row_index():
    c = ClientDataset(2, DataMatrix(np.zeros((4, 2))))
    np.testing.assert_array_equal(c.row_index, np.arange(4))
    assert c.size == 4
