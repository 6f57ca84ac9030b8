"""Utility functions for logging, configuration and random streams."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from .exceptions import InvalidConfigError, NumericInputError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Configure logging for the library and the CLI."""
    level = getattr(logging, log_level.upper(), None)
    if not isinstance(level, int):
        raise InvalidConfigError(f"Unknown log level: {log_level}")
    # Configure console output
    logging.basicConfig(level=level, format=LOG_FORMAT)
    # Optional file handler for persistent logs of long simulation runs
    if log_file:
        root = logging.getLogger()
        target = str(Path(log_file).resolve())
        if not any(getattr(h, "baseFilename", None) == target for h in root.handlers):
            file_handler = logging.FileHandler(target)
            file_handler.setLevel(level)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            root.addHandler(file_handler)
    logging.getLogger("dp_survtest").setLevel(level)


def load_config() -> Dict[str, Any]:
    """Load packaged defaults from config.json."""
    config_path = Path(__file__).parent / "config.json"
    with open(config_path) as f:
        return json.load(f)


def derive_stream(master_seed: int, *key: int) -> Tuple[int, np.random.Generator]:
    """Return (seed, generator) for the stream keyed by master_seed and key.

    Streams are Philox generators seeded from SeedSequence(master_seed, spawn_key=key),
    so the stream for one key never depends on which other keys exist.
    """
    if master_seed < 0:
        raise InvalidConfigError(f"master_seed must be non-negative, got {master_seed}")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    seed = int(seq.generate_state(1, dtype=np.uint64)[0])
    return seed, np.random.Generator(np.random.Philox(seq))


def make_stream(seed: int) -> np.random.Generator:
    """Counter-based generator for a single integer seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def as_vector(values: Iterable[float], name: str = "vector") -> np.ndarray:
    """Convert to a finite 1-D float array or raise NumericInputError."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise NumericInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains non-finite values: {arr.tolist()}")
    return arr


def format_float(value: float) -> str:
    """Shortest round-trip text for a float; stable across runs."""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)
