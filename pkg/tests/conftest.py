import numpy as np
import pytest

from app.core.dataset import DataMatrix
from tests.helpers import blob_data


@pytest.fixture
def two_blobs_1d() -> DataMatrix:
    rng = np.random.default_rng(5)
    low = np.clip(rng.normal(0.0, 0.01, 50), 0.0, 1.0)
    high = np.clip(rng.normal(1.0, 0.01, 50), 0.0, 1.0)
    labels = np.r_[np.zeros(50, dtype=int), np.ones(50, dtype=int)]
    return DataMatrix(np.r_[low, high].reshape(-1, 1), labels)


@pytest.fixture
def four_blobs() -> DataMatrix:
    return blob_data(4, 400, seed=3)


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(
        "x,y,label\n"
        "0.0,1.0,0\n"
        "0.5,,1\n"
        "2.0,3.0,1\n"
        " 4.0 , 5.0 ,2\n",
        encoding="utf-8",
    )
    return path
