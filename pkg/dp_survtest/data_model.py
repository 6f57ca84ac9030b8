"""Survival data types, synthetic generators and neighbouring datasets.

A dataset holds right-censored observations (T, Delta, Z) with time-fixed
covariate vectors. The at-risk indicator is Y_i(t) = 1{T_i >= t} and the
counting process is N_i(t) = 1{T_i <= t, Delta_i = 1}.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .exceptions import DatasetValidationError, InvalidConfigError, NumericInputError
from .utility import format_float, make_stream

logger = logging.getLogger("dp_survtest.data_model")

# Slack on the covariate-norm check; generated corners sit exactly on the bound.
NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CensoredObservation:
    """One subject: observed time, event indicator and covariate vector."""
    time: float
    status: int
    covariates: Tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise DatasetValidationError(f"time must be finite and >= 0, got {self.time}")
        if self.status not in (0, 1):
            raise DatasetValidationError(f"status must be 0 or 1, got {self.status}")
        object.__setattr__(self, "covariates", tuple(float(z) for z in self.covariates))
        if not all(math.isfinite(z) for z in self.covariates):
            raise NumericInputError(f"covariates must be finite, got {self.covariates}")

    @property
    def dimension(self) -> int:
        return len(self.covariates)

    @property
    def covariate_norm(self) -> float:
        return math.sqrt(sum(z * z for z in self.covariates))


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Immutable column store of censored observations.

    times, status and covariates are read-only numpy arrays of lengths n, n and
    shape (n, d). The covariate bound C_Z enters every sensitivity formula.
    """
    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    covariate_bound: float = 1.0

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        status = np.array(self.status, dtype=np.int8).reshape(-1)
        covariates = np.array(self.covariates, dtype=float)
        n = times.shape[0]
        if covariates.size == 0 and covariates.ndim != 2:
            covariates = np.zeros((n, 0))
        if covariates.ndim != 2 or covariates.shape[0] != n or status.shape[0] != n:
            raise DatasetValidationError(
                f"inconsistent shapes: times {times.shape}, status {status.shape}, covariates {covariates.shape}")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DatasetValidationError("times must be finite and non-negative")
        if not np.all((status == 0) | (status == 1)):
            raise DatasetValidationError("status values must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise NumericInputError("covariates contain non-finite values")
        if not (self.covariate_bound > 0 and math.isfinite(self.covariate_bound)):
            raise InvalidConfigError(f"covariate_bound must be positive, got {self.covariate_bound}")
        if n and covariates.shape[1]:
            norms = np.linalg.norm(covariates, axis=1)
            worst = int(np.argmax(norms))
            if norms[worst] > self.covariate_bound + NORM_TOLERANCE:
                raise DatasetValidationError(
                    f"observation {worst} has covariate norm {norms[worst]:.6g} above C_Z={self.covariate_bound}")
        for arr in (times, status, covariates):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariates", covariates)

    @classmethod
    def from_observations(cls, observations: Sequence[CensoredObservation],
                          dimension: Optional[int] = None,
                          covariate_bound: float = 1.0) -> "SurvivalDataset":
        observations = list(observations)
        if dimension is None:
            dimension = observations[0].dimension if observations else 0
        for i, obs in enumerate(observations):
            if obs.dimension != dimension:
                raise DatasetValidationError(
                    f"observation {i} has dimension {obs.dimension}, expected {dimension}")
        return cls(
            times=np.array([o.time for o in observations], dtype=float),
            status=np.array([o.status for o in observations], dtype=np.int8),
            covariates=np.array([o.covariates for o in observations], dtype=float).reshape(len(observations), dimension),
            covariate_bound=covariate_bound,
        )

    @property
    def n(self) -> int:
        return int(self.times.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def event_count(self) -> int:
        return int(self.status.sum())

    @property
    def observations(self) -> List[CensoredObservation]:
        return [self[i] for i in range(self.n)]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, index: int) -> CensoredObservation:
        return CensoredObservation(float(self.times[index]), int(self.status[index]),
                                   tuple(self.covariates[index]))

    def __iter__(self) -> Iterator[CensoredObservation]:
        for i in range(self.n):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (self.covariate_bound == other.covariate_bound
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.status, other.status)
                and self.covariates.shape == other.covariates.shape
                and np.array_equal(self.covariates, other.covariates))

    def subset(self, rows: Union[slice, Sequence[int], np.ndarray]) -> "SurvivalDataset":
        """Dataset restricted to the given rows, same C_Z."""
        return SurvivalDataset(self.times[rows], self.status[rows],
                               self.covariates[rows], self.covariate_bound)

    def hamming_distance(self, other: "SurvivalDataset") -> int:
        """Number of positions where two equal-size datasets differ."""
        if self.n != other.n or self.dimension != other.dimension:
            raise InvalidConfigError("datasets must have the same size and dimension")
        differs = ((self.times != other.times) | (self.status != other.status)
                   | np.any(self.covariates != other.covariates, axis=1))
        return int(differs.sum())


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of the synthetic Cox / two-sample designs."""
    n: int
    d: int
    beta_star: Tuple[float, ...] = ()
    baseline_rate: float = 1.0
    censor_rate: float = 0.3
    truncate_at_one: bool = True
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta_star", tuple(float(b) for b in self.beta_star))

    def validate(self) -> None:
        if self.n < 0:
            raise InvalidConfigError(f"n must be >= 0, got {self.n}")
        if self.d < 0:
            raise InvalidConfigError(f"d must be >= 0, got {self.d}")
        if not self.baseline_rate > 0:
            raise InvalidConfigError(f"baseline_rate must be > 0, got {self.baseline_rate}")
        if not self.censor_rate > 0:
            raise InvalidConfigError(f"censor_rate must be > 0, got {self.censor_rate}")
        if self.d == 0:
            if any(b != 0 for b in self.beta_star):
                raise InvalidConfigError("beta_star must be zero when d = 0")
        elif len(self.beta_star) != self.d:
            raise InvalidConfigError(f"beta_star has length {len(self.beta_star)}, expected d={self.d}")
        if not all(math.isfinite(b) for b in self.beta_star):
            raise InvalidConfigError("beta_star must be finite")

    def stream(self) -> np.random.Generator:
        return make_stream(self.seed)


def _exponential(rng: np.random.Generator, rate: float, size: int) -> np.ndarray:
    # Inverse transform: -log(1 - U) / rate, U uniform on [0, 1).
    return -np.log1p(-rng.random(size)) / rate


def generate_cox_dataset(config: SimulationConfig,
                         rng: Optional[np.random.Generator] = None) -> SurvivalDataset:
    """Draw n observations from the Cox model with constant baseline hazard.

    Covariates are Uniform(-1/sqrt(d), 1/sqrt(d)) per coordinate, so every norm is
    at most 1 and the dataset's C_Z is 1. Event times are E / exp(beta*'Z) with
    E ~ Exp(baseline_rate); censoring times are Exp(censor_rate).
    """
    config.validate()
    if rng is None:
        rng = config.stream()
    n, d = config.n, config.d
    if d > 0:
        half_width = 1.0 / math.sqrt(d)
        covariates = rng.uniform(-half_width, half_width, size=(n, d))
        eta = covariates @ np.asarray(config.beta_star, dtype=float)
    else:
        covariates = np.zeros((n, 0))
        eta = np.zeros(n)
    event_times = _exponential(rng, config.baseline_rate, n) / np.exp(eta)
    censor_times = _exponential(rng, config.censor_rate, n)
    if config.truncate_at_one:
        end = np.minimum(censor_times, 1.0)
    else:
        end = censor_times
    times = np.minimum(event_times, end)
    status = (event_times <= end).astype(np.int8)
    return SurvivalDataset(times, status, covariates, covariate_bound=1.0)


def generate_hazard_sample(rate: float, censor_rate: float, n: int,
                           rng: np.random.Generator) -> SurvivalDataset:
    """Covariate-less exponential sample for the two-sample design.

    Observations past t = 1 are recorded as censored at 1, so they stay at risk
    on the whole estimator domain [0, 1].
    """
    if n < 0:
        raise InvalidConfigError(f"n must be >= 0, got {n}")
    if not rate > 0 or not censor_rate > 0:
        raise InvalidConfigError(f"rates must be > 0, got rate={rate}, censor_rate={censor_rate}")
    event_times = _exponential(rng, rate, n)
    censor_times = _exponential(rng, censor_rate, n)
    end = np.minimum(censor_times, 1.0)
    times = np.minimum(event_times, end)
    status = (event_times <= end).astype(np.int8)
    return SurvivalDataset(times, status, np.zeros((n, 0)), covariate_bound=1.0)


def neighboring_dataset(dataset: SurvivalDataset, index: int,
                        replacement: CensoredObservation) -> SurvivalDataset:
    """Copy of dataset with the record at index replaced."""
    if not 0 <= index < dataset.n:
        raise DatasetValidationError(f"index {index} out of range for n={dataset.n}")
    if replacement.dimension != dataset.dimension:
        raise DatasetValidationError(
            f"replacement has dimension {replacement.dimension}, dataset has {dataset.dimension}")
    if replacement.covariate_norm > dataset.covariate_bound + NORM_TOLERANCE:
        raise DatasetValidationError(
            f"replacement covariate norm {replacement.covariate_norm:.6g} exceeds C_Z={dataset.covariate_bound}")
    times = dataset.times.copy()
    status = dataset.status.copy()
    covariates = dataset.covariates.copy()
    times[index] = replacement.time
    status[index] = replacement.status
    covariates[index] = replacement.covariates
    return SurvivalDataset(times, status, covariates, dataset.covariate_bound)


def split_halves(dataset: SurvivalDataset) -> Tuple[SurvivalDataset, SurvivalDataset]:
    """First ceil(n/2) records and last floor(n/2) records."""
    cut = (dataset.n + 1) // 2
    return dataset.subset(slice(0, cut)), dataset.subset(slice(cut, None))


# ---------------------------------------------------------------------------
# CSV exchange: header time,status,z1,...,zd
# ---------------------------------------------------------------------------

def _parse_float(text: str, what: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetValidationError(f"{what} {text!r} is not a number", line=line)
    if not math.isfinite(value):
        raise DatasetValidationError(f"{what} {text!r} is not finite", line=line)
    return value


def parse_dataset_csv(handle: TextIO, covariate_bound: float = 1.0) -> SurvivalDataset:
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetValidationError("empty file: missing header time,status,z1,...,zd", line=1)
    header = [h.strip() for h in header]
    if header[:2] != ["time", "status"]:
        raise DatasetValidationError(f"header must start with time,status, got {','.join(header)}", line=1)
    d = len(header) - 2
    expected = [f"z{j + 1}" for j in range(d)]
    if header[2:] != expected:
        raise DatasetValidationError(f"covariate columns must be {','.join(expected) or '(none)'}", line=1)

    times, status, rows = [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != d + 2:
            raise DatasetValidationError(f"expected {d + 2} fields, got {len(row)}", line=line)
        t = _parse_float(row[0], "time", line)
        if t < 0:
            raise DatasetValidationError(f"time {t} is negative", line=line)
        s = row[1].strip()
        if s not in ("0", "1"):
            raise DatasetValidationError(f"status {s!r} is not 0 or 1", line=line)
        z = [_parse_float(cell, f"z{j + 1}", line) for j, cell in enumerate(row[2:])]
        norm = math.sqrt(sum(v * v for v in z))
        if norm > covariate_bound + NORM_TOLERANCE:
            raise DatasetValidationError(
                f"covariate norm {norm:.6g} exceeds declared C_Z={covariate_bound}", line=line)
        times.append(t)
        status.append(int(s))
        rows.append(z)
    if not times:
        raise DatasetValidationError("file contains no observations", line=reader.line_num or 1)
    logger.debug(f"Parsed dataset with n={len(times)}, d={d}")
    return SurvivalDataset(np.array(times), np.array(status, dtype=np.int8),
                           np.array(rows, dtype=float).reshape(len(times), d), covariate_bound)


def read_dataset_csv(path: Union[str, Path], covariate_bound: float = 1.0) -> SurvivalDataset:
    """Load a dataset CSV; validation errors name the offending line."""
    with open(path, newline="") as f:
        return parse_dataset_csv(f, covariate_bound)


def write_dataset_csv(dataset: SurvivalDataset, target: Union[str, Path, TextIO]) -> None:
    """Write the dataset in the time,status,z1..zd schema."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as f:
            write_dataset_csv(dataset, f)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["time", "status"] + [f"z{j + 1}" for j in range(dataset.dimension)])
    for i in range(dataset.n):
        writer.writerow([format_float(dataset.times[i]), int(dataset.status[i])]
                        + [format_float(z) for z in dataset.covariates[i]])


def dataset_to_csv_text(dataset: SurvivalDataset) -> str:
    buf = io.StringIO()
    write_dataset_csv(dataset, buf)
    return buf.getvalue()
