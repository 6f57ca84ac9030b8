"""Test the calibrated-threshold store."""
import os

import pytest

from dp_survtest.storage import ThresholdStore, resolve_db_path


@pytest.fixture
def store(tmp_path):
    """Create a temporary threshold database."""
    return ThresholdStore(db_path=str(tmp_path / "store" / "thresholds.db"))


def test_put_and_get(store):
    store.put("binary", 3000, 3, 1.0, 0.0, 0.15, -2.5, 2000, 7)
    entry = store.get("binary", 3000, 3, 1.0, 0.0, 0.15)
    assert entry is not None
    assert entry.threshold == -2.5
    assert entry.n_mc == 2000
    assert entry.master_seed == 7
    assert store.get("binary", 3000, 3, 2.0, 0.0, 0.15) is None


def test_same_key_is_replaced(store):
    store.put("score", 100, 3, 1.0, 0.0, 0.15, 1.0, 10, 0)
    store.put("score", 100, 3, 1.0, 0.0, 0.15, 2.0, 20, 0)
    assert store.count_entries() == 1
    assert store.get("score", 100, 3, 1.0, 0.0, 0.15).threshold == 2.0


def test_list_and_counts(store):
    store.put("binary", 3000, 3, 1.0, 0.0, 0.15, -1.0, 10, 0)
    store.put("binary", 6000, 3, 4.0, 0.0, 0.15, -2.0, 10, 0)
    store.put("two_sample", 5000, 0, 4.0, 0.001, 0.15, 0.1, 10, 0)
    assert [e.n for e in store.list_entries("binary")] == [3000, 6000]
    assert len(store.list_entries()) == 3
    assert store.kind_counts() == {"binary": 2, "two_sample": 1}


def test_path_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env" / "t.db"
    monkeypatch.setenv("DPSURV_THRESHOLD_DB", str(target))
    assert resolve_db_path() == str(target)
    ThresholdStore()
    assert os.path.exists(target)


def test_explicit_path_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("DPSURV_THRESHOLD_DB", str(tmp_path / "env.db"))
    assert resolve_db_path(str(tmp_path / "arg.db")) == str(tmp_path / "arg.db")
