"""Experiment runner: simulation grids, single tests on files and threshold calibration.

Every repetition draws from its own stream keyed by (master_seed, cell_index, rep),
so results never depend on how many workers run them or on which other cells
exist. Rows are written in cell-major, rep-minor order.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from tqdm import tqdm

from .data_model import (SimulationConfig, SurvivalDataset, generate_cox_dataset,
                         generate_hazard_sample, read_dataset_csv, write_dataset_csv)
from .dp_core import PrivacyBudget
from .dp_tests import (LOWER, UPPER, ScoreTestConfig, TestResult, binary_lrt_test,
                       calibrate_threshold_mc, score_test_oracle, score_test_plugin)
from .exceptions import InfeasibleParametersError, InvalidConfigError
from .storage import ThresholdEntry, ThresholdStore
from .two_sample import ServerConfig, run_two_sample_test, two_sample_null_sampler
from .utility import derive_stream, format_float, load_config

logger = logging.getLogger("dp_survtest.harness")

SCHEMA_VERSION = 1
TEST_KINDS = ("binary", "score", "two_sample")
THRESHOLD_MODES = ("formula", "mc")
SCORE_MODES = ("plugin", "oracle")
SINGLE_TEST_KINDS = ("binary", "score", "score_oracle")
# Third spawn-key component separating calibration streams from rep streams.
CALIBRATION_STREAM = 1


def _defaults() -> Dict[str, Any]:
    return load_config().get("defaults", {})


def read_grid_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw key-value pairs of a flat JSON grid file, not yet validated."""
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"{path}: invalid JSON: {e}")
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{path}: grid file must hold a flat JSON object")
    return data


@dataclass
class ExperimentGrid:
    """One experiment: a test kind swept over n and epsilon."""
    test_kind: str
    n_values: List[int]
    epsilon_values: List[float]
    delta: float = 0.001
    reps: int = 200
    master_seed: int = 0
    d: int = 3
    beta_star: List[float] = field(default_factory=list)
    beta0: List[float] = field(default_factory=list)
    beta1: List[float] = field(default_factory=list)
    baseline_rate: float = 1.0
    censor_rate: float = 0.3
    gamma: float = 0.0
    c1: float = 0.5
    c2: float = 2.0
    c: float = 2.0
    alpha: float = 0.15
    n_mc: int = 2000
    threshold_mode: str = "formula"
    threshold: Optional[float] = None
    score_mode: str = "plugin"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentGrid":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfigError(f"Unknown grid keys: {', '.join(unknown)}")
        values = {k: v for k, v in _defaults().items() if k in known}
        values.update(data)
        missing = [k for k in ("test_kind", "n_values", "epsilon_values") if k not in values]
        if missing:
            raise InvalidConfigError(f"Missing grid keys: {', '.join(missing)}")
        grid = cls(**values)
        grid.validate()
        return grid

    def validate(self) -> None:
        if self.test_kind not in TEST_KINDS:
            raise InvalidConfigError(f"test_kind must be one of {TEST_KINDS}, got {self.test_kind!r}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise InvalidConfigError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.score_mode not in SCORE_MODES:
            raise InvalidConfigError(f"score_mode must be one of {SCORE_MODES}")
        if self.reps < 1:
            raise InvalidConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.n_values or not self.epsilon_values:
            raise InvalidConfigError("n_values and epsilon_values must be nonempty")
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise InvalidConfigError(f"n_values must be positive integers, got {self.n_values}")
        if any(not (e > 0 and math.isfinite(e)) for e in self.epsilon_values):
            raise InvalidConfigError(f"epsilon_values must be finite and > 0, got {self.epsilon_values}")
        if not 0 <= self.delta < 1:
            raise InvalidConfigError(f"delta must be in [0, 1), got {self.delta}")
        if self.master_seed < 0:
            raise InvalidConfigError(f"master_seed must be non-negative, got {self.master_seed}")
        if self.test_kind == "two_sample":
            if self.delta <= 0:
                raise InvalidConfigError("two_sample grids need delta > 0")
            return
        if self.d < 1:
            raise InvalidConfigError(f"d must be >= 1, got {self.d}")
        for name in ("beta_star", "beta0") + (("beta1",) if self.test_kind == "binary" else ()):
            if len(getattr(self, name)) != self.d:
                raise InvalidConfigError(f"{name} must have length d={self.d}, got {len(getattr(self, name))}")
        if (self.test_kind == "score" and self.score_mode == "oracle"
                and self.threshold is None and self.threshold_mode != "mc"):
            raise InvalidConfigError("oracle score test needs a fixed threshold or threshold_mode='mc'")
        if self.test_kind == "score" and self.score_mode == "plugin" and (
                self.threshold is not None or self.threshold_mode == "mc"):
            raise InvalidConfigError("plugin score test estimates its own threshold; drop threshold and use "
                                     "threshold_mode='formula'")
        ScoreTestConfig(self.c1, self.c2, self.alpha, self.n_mc)

    @property
    def row_d(self) -> int:
        return 0 if self.test_kind == "two_sample" else self.d

    @property
    def row_delta(self) -> float:
        return self.delta if self.test_kind == "two_sample" else 0.0

    def cells(self) -> List[Tuple[int, int, float]]:
        """(cell_index, n, epsilon) in canonical order: n-major, epsilon-minor."""
        out = []
        for n in self.n_values:
            for eps in self.epsilon_values:
                out.append((len(out), int(n), float(eps)))
        return out

    def simulation_config(self, n: int, beta: Sequence[float]) -> SimulationConfig:
        return SimulationConfig(n=n, d=self.d, beta_star=tuple(beta), baseline_rate=self.baseline_rate,
                                censor_rate=self.censor_rate, gamma=self.gamma)

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True)
class ResultRow:
    test_kind: str
    n: int
    d: int
    epsilon: float
    delta: float
    rep: int
    statistic: float
    threshold: float
    reject: int
    seed: int

    def csv_fields(self) -> List[str]:
        return [self.test_kind, str(self.n), str(self.d), format_float(self.epsilon),
                format_float(self.delta), str(self.rep), format_float(self.statistic),
                format_float(self.threshold), str(self.reject), str(self.seed)]

    def to_json(self):
        return asdict(self)


ROW_FIELDS = [f.name for f in fields(ResultRow)]


@dataclass
class CellSummary:
    test_kind: str
    n: int
    epsilon: float
    reps: int
    rejections: int = 0
    threshold: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    @property
    def rate(self) -> float:
        return self.rejections / self.reps if self.reps and not self.failed else float("nan")

    @property
    def standard_error(self) -> float:
        p = self.rate
        return math.sqrt(p * (1 - p) / self.reps) if not self.failed else float("nan")

    def to_json(self):
        return {"test_kind": self.test_kind, "n": self.n, "epsilon": self.epsilon, "reps": self.reps,
                "rejections": self.rejections, "rate": self.rate, "standard_error": self.standard_error,
                "threshold": self.threshold, "failed": self.failed, "error": self.error}


@dataclass
class SingleTestSpec:
    """What to run on a dataset file."""
    kind: str
    beta0: List[float]
    beta1: List[float] = field(default_factory=list)
    threshold: Optional[float] = None
    score_config: ScoreTestConfig = field(default_factory=ScoreTestConfig)

    def __post_init__(self):
        if self.kind not in SINGLE_TEST_KINDS:
            raise InvalidConfigError(f"test kind must be one of {SINGLE_TEST_KINDS}, got {self.kind!r}")
        if self.kind == "score_oracle" and self.threshold is None:
            raise InvalidConfigError("score_oracle needs a threshold (tau)")


def write_rows(rows: Sequence[ResultRow], sink: TextIO, noise_off: bool = False) -> None:
    sink.write(f"# schema_version: {SCHEMA_VERSION}\n")
    if noise_off:
        sink.write("# NON-PRIVATE: privacy noise disabled\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    for row in rows:
        writer.writerow(row.csv_fields())


class ExperimentRunner:
    """Facade over simulation, testing and calibration."""

    def __init__(self, store: Optional[ThresholdStore] = None, progress: bool = False):
        self.store = store
        self.progress = progress

    # -- simulation ---------------------------------------------------------

    def simulate(self, config: SimulationConfig, target: Optional[Union[str, Path, TextIO]] = None,
                 two_sample_arm: bool = False) -> SurvivalDataset:
        """Draw a dataset; the two-sample arm has hazard baseline_rate * (1 + gamma) and no covariates."""
        config.validate()
        if two_sample_arm:
            dataset = generate_hazard_sample(config.baseline_rate * (1 + config.gamma), config.censor_rate,
                                             config.n, config.stream())
        else:
            dataset = generate_cox_dataset(config)
        if target is not None:
            write_dataset_csv(dataset, target)
        logger.info(f"Simulated n={dataset.n}, d={dataset.dimension}, events={dataset.event_count}")
        return dataset

    # -- single test ---------------------------------------------------------

    def run_single_test(self, dataset_file: Union[str, Path], spec: SingleTestSpec, budget: PrivacyBudget,
                        rng: np.random.Generator, seed: int = 0, covariate_bound: float = 1.0,
                        noise_off: bool = False) -> Tuple[ResultRow, TestResult]:
        dataset = read_dataset_csv(dataset_file, covariate_bound)
        if spec.kind == "binary":
            result = binary_lrt_test(dataset, spec.beta0, spec.beta1, budget, rng,
                                     threshold=0.0 if spec.threshold is None else spec.threshold,
                                     noise_off=noise_off)
        elif spec.kind == "score":
            result = score_test_plugin(dataset, spec.beta0, budget, spec.score_config, rng, noise_off=noise_off)
        else:
            result = score_test_oracle(dataset, spec.beta0, budget, spec.threshold, rng, noise_off=noise_off)
        row = ResultRow(test_kind=spec.kind, n=dataset.n, d=dataset.dimension, epsilon=budget.epsilon,
                        delta=result.budget.delta, rep=0, statistic=result.released,
                        threshold=result.threshold, reject=int(result.reject), seed=seed)
        return row, result

    # -- calibration ----------------------------------------------------------

    def _null_sampler(self, grid: ExperimentGrid, n: int, epsilon: float, noise_off: bool):
        if grid.test_kind == "two_sample":
            budget = PrivacyBudget(epsilon, grid.delta)
            return two_sample_null_sampler(n, n, budget, budget, grid.baseline_rate, grid.censor_rate)
        budget = PrivacyBudget(epsilon)
        null = grid.simulation_config(n, grid.beta0)
        if grid.test_kind == "binary":
            def sample(rng):
                data = generate_cox_dataset(null, rng)
                return binary_lrt_test(data, grid.beta0, grid.beta1, budget, rng, noise_off=noise_off).released
        else:
            def sample(rng):
                data = generate_cox_dataset(null, rng)
                return score_test_oracle(data, grid.beta0, budget, math.inf, rng, noise_off=noise_off).released
        return sample

    def calibrate(self, grid: ExperimentGrid, cell_index: int, level: Optional[float] = None,
                  n_mc: Optional[int] = None, workers: int = 1, noise_off: bool = False) -> ThresholdEntry:
        """Monte Carlo threshold for one grid cell, stored when a store is attached."""
        cells = grid.cells()
        if not 0 <= cell_index < len(cells):
            raise InvalidConfigError(f"cell_index {cell_index} out of range for {len(cells)} cells")
        _, n, epsilon = cells[cell_index]
        level = grid.alpha if level is None else level
        n_mc = grid.n_mc if n_mc is None else n_mc
        _, rng = derive_stream(grid.master_seed, cell_index, CALIBRATION_STREAM, 0)
        tail = LOWER if grid.test_kind == "binary" else UPPER
        logger.info(f"Calibrating {grid.test_kind} n={n} eps={epsilon} at level {level} with {n_mc} draws")
        value = calibrate_threshold_mc(self._null_sampler(grid, n, epsilon, noise_off), level, n_mc, rng,
                                       tail=tail, workers=workers, progress=self.progress)
        if self.store is not None and not noise_off:
            return self.store.put(grid.test_kind, n, grid.row_d, epsilon, grid.row_delta, level,
                                  value, n_mc, grid.master_seed)
        return ThresholdEntry(grid.test_kind, n, grid.row_d, epsilon, grid.row_delta, level, value,
                              n_mc, grid.master_seed, "")

    def _cell_threshold(self, grid: ExperimentGrid, cell_index: int, n: int, epsilon: float,
                        workers: int, noise_off: bool) -> Optional[float]:
        if grid.threshold is not None:
            return float(grid.threshold)
        if grid.threshold_mode != "mc":
            return None
        if self.store is not None and not noise_off:
            cached = self.store.get(grid.test_kind, n, grid.row_d, epsilon, grid.row_delta, grid.alpha)
            if cached is not None:
                logger.info(f"Reusing stored threshold {cached.threshold:.6g} for cell {cell_index}")
                return cached.threshold
        return self.calibrate(grid, cell_index, workers=workers, noise_off=noise_off).threshold

    # -- experiment ------------------------------------------------------------

    def _run_rep(self, grid: ExperimentGrid, cell: Tuple[int, int, float], rep: int,
                 threshold: Optional[float], noise_off: bool) -> ResultRow:
        cell_index, n, epsilon = cell
        seed, rng = derive_stream(grid.master_seed, cell_index, rep)
        if grid.test_kind == "two_sample":
            rng1, rng2 = rng.spawn(2)
            budget = PrivacyBudget(epsilon, grid.delta)
            first = generate_hazard_sample(grid.baseline_rate, grid.censor_rate, n, rng1)
            second = generate_hazard_sample(grid.baseline_rate * (1 + grid.gamma), grid.censor_rate, n, rng2)
            outcome = run_two_sample_test(ServerConfig(first, budget, "1"), ServerConfig(second, budget, "2"),
                                          grid.c, rng1, rng2, threshold=threshold, noise_off=noise_off)
            statistic, tau, reject = outcome.statistic, outcome.threshold, outcome.reject
        else:
            budget = PrivacyBudget(epsilon)
            data = generate_cox_dataset(grid.simulation_config(n, grid.beta_star), rng)
            if grid.test_kind == "binary":
                result = binary_lrt_test(data, grid.beta0, grid.beta1, budget, rng,
                                         threshold=0.0 if threshold is None else threshold, noise_off=noise_off)
            elif grid.score_mode == "oracle":
                result = score_test_oracle(data, grid.beta0, budget, threshold, rng, noise_off=noise_off)
            else:
                config = ScoreTestConfig(grid.c1, grid.c2, grid.alpha, grid.n_mc)
                result = score_test_plugin(data, grid.beta0, budget, config, rng, noise_off=noise_off)
            statistic, tau, reject = result.released, result.threshold, result.reject
        return ResultRow(test_kind=grid.test_kind, n=n, d=grid.row_d, epsilon=epsilon, delta=grid.row_delta,
                         rep=rep, statistic=statistic, threshold=tau, reject=int(reject), seed=seed)

    def _run_cell(self, grid: ExperimentGrid, cell: Tuple[int, int, float], workers: int,
                  noise_off: bool) -> Tuple[CellSummary, List[ResultRow]]:
        cell_index, n, epsilon = cell
        summary = CellSummary(grid.test_kind, n, epsilon, grid.reps)
        try:
            threshold = self._cell_threshold(grid, cell_index, n, epsilon, workers, noise_off)
            summary.threshold = threshold
            reps = range(grid.reps)
            desc = f"cell {cell_index} (n={n}, eps={epsilon})"
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    rows = list(tqdm(pool.map(lambda r: self._run_rep(grid, cell, r, threshold, noise_off), reps),
                                     total=grid.reps, desc=desc, disable=not self.progress))
            else:
                rows = [self._run_rep(grid, cell, r, threshold, noise_off)
                        for r in tqdm(reps, desc=desc, disable=not self.progress)]
        except InfeasibleParametersError as e:
            if grid.test_kind != "two_sample":
                raise
            logger.warning(f"Cell {cell_index} (n={n}, eps={epsilon}) failed: {e}")
            summary.failed, summary.error = True, str(e)
            return summary, []
        summary.rejections = sum(row.reject for row in rows)
        if summary.threshold is None and rows:
            summary.threshold = rows[0].threshold if grid.test_kind != "score" else None
        logger.info(f"Cell {cell_index} (n={n}, eps={epsilon}): rejection rate "
                    f"{summary.rate:.3f} +/- {summary.standard_error:.3f}")
        return summary, rows

    def run_experiment(self, grid: ExperimentGrid, sink: Optional[TextIO] = None, workers: int = 1,
                       noise_off: bool = False) -> List[CellSummary]:
        """Run every (cell, rep); write rows to sink and return per-cell summaries."""
        grid.validate()
        if workers < 1:
            raise InvalidConfigError(f"workers must be >= 1, got {workers}")
        logger.info(f"Running {grid.test_kind} experiment: {len(grid.cells())} cells x {grid.reps} reps")
        summaries, all_rows = [], []
        for cell in grid.cells():
            summary, rows = self._run_cell(grid, cell, workers, noise_off)
            summaries.append(summary)
            all_rows.extend(rows)
        if sink is not None:
            write_rows(all_rows, sink, noise_off)
        return summaries


def write_summary(summaries: Sequence[CellSummary], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["test_kind", "n", "epsilon", "reps", "rejections", "rate", "standard_error", "status"])
    for s in summaries:
        writer.writerow([s.test_kind, s.n, format_float(s.epsilon), s.reps, s.rejections,
                         format_float(s.rate), format_float(s.standard_error),
                         "failed" if s.failed else "ok"])
