"""Test the utility functions."""
import logging

import numpy as np
import pytest

from dp_survtest.exceptions import InvalidConfigError, NumericInputError
from dp_survtest.utility import as_vector, derive_stream, format_float, load_config, setup_logging


def test_load_config():
    """Test configuration loading."""
    config = load_config()
    assert isinstance(config, dict)
    assert config["defaults"]["c"] == 2.0
    assert config["defaults"]["alpha"] == 0.15
    assert config["defaults"]["delta"] == 0.001


def test_setup_logging(tmp_path):
    """Test logging setup."""
    log_file = tmp_path / "run.log"
    setup_logging("DEBUG", str(log_file))
    setup_logging("DEBUG", str(log_file))
    logger = logging.getLogger("dp_survtest")
    assert logger.level == logging.DEBUG
    handlers = [h for h in logging.getLogger().handlers if getattr(h, "baseFilename", None) == str(log_file.resolve())]
    assert len(handlers) == 1
    for h in handlers:
        logging.getLogger().removeHandler(h)
        h.close()


def test_setup_logging_rejects_unknown_level():
    with pytest.raises(InvalidConfigError):
        setup_logging("LOUD")


def test_derive_stream_is_keyed():
    seed_a, rng_a = derive_stream(42, 0, 1)
    seed_b, rng_b = derive_stream(42, 0, 1)
    seed_c, _ = derive_stream(42, 1, 0)
    assert seed_a == seed_b
    assert seed_a != seed_c
    assert rng_a.random() == rng_b.random()
    with pytest.raises(InvalidConfigError):
        derive_stream(-1)


def test_as_vector():
    assert np.array_equal(as_vector([1, 2]), [1.0, 2.0])
    assert as_vector(0.5).shape == (1,)
    with pytest.raises(NumericInputError):
        as_vector([1.0, np.nan])
    with pytest.raises(NumericInputError):
        as_vector([[1.0]])


def test_format_float():
    assert format_float(0.1) == "0.1"
    assert float(format_float(1 / 3)) == 1 / 3
    assert format_float(float("inf")) == "inf"
    assert format_float(float("-inf")) == "-inf"
