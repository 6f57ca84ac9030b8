"""Shared fixtures for the test suite."""
import numpy as np
import pytest

from dp_survtest.data_model import SurvivalDataset
from dp_survtest.utility import make_stream


@pytest.fixture
def dataset_a():
    """Three subjects: times 0.2 (event), 0.5 (event), 0.8 (censored); Z = 1, 0, -1."""
    return SurvivalDataset(np.array([0.2, 0.5, 0.8]), np.array([1, 1, 0]), np.array([[1.0], [0.0], [-1.0]]))


@pytest.fixture
def rng():
    return make_stream(12345)


@pytest.fixture
def threshold_db(tmp_path, monkeypatch):
    """Point the threshold store at a temporary file."""
    path = tmp_path / "thresholds.db"
    monkeypatch.setenv("DPSURV_THRESHOLD_DB", str(path))
    return path
