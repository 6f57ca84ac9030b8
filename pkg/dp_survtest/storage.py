import logging
import os
import sqlite3
import sys
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .exceptions import InvalidConfigError

logger = logging.getLogger("dp_survtest.storage")

DB_ENV_VAR = "DPSURV_THRESHOLD_DB"

ThresholdKey = Tuple[str, int, int, float, float, float]


@dataclass(frozen=True)
class ThresholdEntry:
    test_kind: str
    n: int
    d: int
    epsilon: float
    delta: float
    level: float
    threshold: float
    n_mc: int
    master_seed: int
    created: str

    @property
    def key(self) -> ThresholdKey:
        return (self.test_kind, self.n, self.d, self.epsilon, self.delta, self.level)

    def to_json(self):
        return dict(self.__dict__)


def _default_db_dir() -> str:
    try:
        from platformdirs import user_data_dir
        return user_data_dir("dp-survtest")
    except ImportError:
        if os.name == "nt":
            return os.path.join(os.environ.get("APPDATA", str(Path.home() / "AppData" / "Roaming")), "dp-survtest")
        if sys.platform == "darwin":
            return str(Path.home() / "Library" / "Application Support" / "dp-survtest")
        return str(Path.home() / ".local" / "share" / "dp-survtest")


def resolve_db_path(db_path: Optional[str] = None) -> str:
    """Explicit argument, then $DPSURV_THRESHOLD_DB, then the per-user data directory."""
    if db_path is None:
        db_path = os.environ.get(DB_ENV_VAR)
    if db_path is None:
        db_dir = _default_db_dir()
        os.makedirs(db_dir, exist_ok=True)
        return os.path.join(db_dir, "thresholds.db")
    db_path = os.path.abspath(db_path)
    db_dir = os.path.dirname(db_path)
    if db_dir:
        try:
            os.makedirs(db_dir, exist_ok=True)
        except OSError as e:
            raise InvalidConfigError(f"Cannot create database directory {db_dir}: {e}")
    return db_path


class ThresholdStore:
    """SQLite store of Monte Carlo calibrated thresholds.

    One row per (test_kind, n, d, epsilon, delta, level); a later calibration of
    the same key replaces the earlier one.
    """

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = resolve_db_path(db_path)
        self._lock = threading.Lock()
        self._init_db()

    def _init_db(self):
        try:
            with sqlite3.connect(self.db_path) as conn:
                conn.execute("PRAGMA journal_mode=WAL;")
                conn.execute("""
                    CREATE TABLE IF NOT EXISTS thresholds (
                        test_kind TEXT NOT NULL,
                        n INTEGER NOT NULL,
                        d INTEGER NOT NULL,
                        epsilon REAL NOT NULL,
                        delta REAL NOT NULL,
                        level REAL NOT NULL,
                        threshold REAL NOT NULL,
                        n_mc INTEGER NOT NULL,
                        master_seed INTEGER NOT NULL,
                        created TEXT NOT NULL,
                        PRIMARY KEY (test_kind, n, d, epsilon, delta, level)
                    )
                """)
                conn.commit()
        except sqlite3.OperationalError as e:
            raise InvalidConfigError(f"Cannot initialize threshold store at {self.db_path}: {e}")

    def put(self, test_kind: str, n: int, d: int, epsilon: float, delta: float, level: float,
            threshold: float, n_mc: int, master_seed: int) -> ThresholdEntry:
        entry = ThresholdEntry(test_kind, int(n), int(d), float(epsilon), float(delta), float(level),
                               float(threshold), int(n_mc), int(master_seed),
                               datetime.now(timezone.utc).isoformat(timespec="seconds"))
        with self._lock, sqlite3.connect(self.db_path) as conn:
            conn.execute(
                "INSERT OR REPLACE INTO thresholds VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                entry.key + (entry.threshold, entry.n_mc, entry.master_seed, entry.created),
            )
            conn.commit()
        logger.info(f"Stored {test_kind} threshold {threshold:.6g} for n={n}, d={d}, eps={epsilon}, level={level}")
        return entry

    def get(self, test_kind: str, n: int, d: int, epsilon: float, delta: float,
            level: float) -> Optional[ThresholdEntry]:
        with sqlite3.connect(self.db_path) as conn:
            row = conn.execute(
                "SELECT * FROM thresholds WHERE test_kind = ? AND n = ? AND d = ? "
                "AND epsilon = ? AND delta = ? AND level = ?",
                (test_kind, int(n), int(d), float(epsilon), float(delta), float(level)),
            ).fetchone()
        return ThresholdEntry(*row) if row else None

    def list_entries(self, test_kind: Optional[str] = None) -> List[ThresholdEntry]:
        query = "SELECT * FROM thresholds"
        params: tuple = ()
        if test_kind:
            query += " WHERE test_kind = ?"
            params = (test_kind,)
        query += " ORDER BY test_kind, n, d, epsilon, delta, level"
        with sqlite3.connect(self.db_path) as conn:
            return [ThresholdEntry(*row) for row in conn.execute(query, params)]

    def count_entries(self) -> int:
        with sqlite3.connect(self.db_path) as conn:
            return conn.execute("SELECT COUNT(*) FROM thresholds").fetchone()[0]

    def kind_counts(self) -> Dict[str, int]:
        with sqlite3.connect(self.db_path) as conn:
            return dict(conn.execute("SELECT test_kind, COUNT(*) FROM thresholds GROUP BY test_kind"))
