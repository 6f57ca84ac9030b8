"""Private tests for Cox regression coefficients and Monte Carlo calibration.

Every test spends a pure (epsilon, 0) budget through the Laplace mechanism.
Decisions use strict inequalities: the likelihood-ratio test rejects when the
privatized statistic is below the threshold, score tests reject when it is above.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from . import cox_engine
from .data_model import SurvivalDataset, split_halves
from .dp_core import (BudgetLedger, PrivacyBudget, laplace_noise, llr_sensitivity,
                      score_sensitivity, single_constant, trace_sensitivity)
from .exceptions import InvalidConfigError, NumericInputError
from .utility import as_vector

logger = logging.getLogger("dp_survtest.dp_tests")

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class TraceEstimate:
    """Private plug-in for the trace of the information matrix."""
    value: float
    raw_trace: float
    noise: float

    def to_json(self):
        return {"value": self.value, "raw_trace": self.raw_trace, "noise": self.noise}


@dataclass(frozen=True)
class TestResult:
    """Outcome of one private test.

    statistic is the pre-noise value and stays in process; released is what a
    private test may publish.
    """
    __test__ = False  # not a pytest class

    statistic: float
    noise: float
    threshold: float
    reject: bool
    budget: PrivacyBudget
    ledger: BudgetLedger = field(default_factory=BudgetLedger, compare=False)
    trace: Optional[TraceEstimate] = None

    @property
    def released(self) -> float:
        return self.statistic + self.noise

    def to_json(self):
        data = {
            "released_statistic": self.released,
            "threshold": self.threshold,
            "reject": self.reject,
            "budget": self.budget.to_json(),
            "ledger": self.ledger.to_json(),
        }
        if self.trace is not None:
            data["trace_estimate"] = self.trace.value
        return data


@dataclass(frozen=True)
class ScoreTestConfig:
    """Tuning constants of the plug-in score test."""
    c1: float = 0.5
    c2: float = 2.0
    alpha: float = 0.15
    n_mc: int = 2000

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise InvalidConfigError(f"c1 and c2 must be > 0, got {self.c1}, {self.c2}")
        if not 0 < self.alpha < 1:
            raise InvalidConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.n_mc < 1:
            raise InvalidConfigError(f"n_mc must be >= 1, got {self.n_mc}")


def _check_epsilon(epsilon: float) -> None:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidConfigError(f"epsilon must be finite and > 0, got {epsilon}")


def _check_nonempty(dataset: SurvivalDataset, what: str = "dataset") -> None:
    if dataset.n < 1:
        raise InvalidConfigError(f"{what} is empty")


def binary_lrt_test(dataset: SurvivalDataset, beta0: Sequence[float], beta1: Sequence[float],
                    budget: PrivacyBudget, rng: Optional[np.random.Generator],
                    threshold: float = 0.0, noise_off: bool = False) -> TestResult:
    """Private partial-likelihood-ratio test of beta* = beta0 against beta1.

    gamma = l_n(b0) - l_n(b1) + (llr_sensitivity / eps) W, rejecting when gamma < threshold.
    """
    _check_epsilon(budget.epsilon)
    _check_nonempty(dataset)
    b0, b1 = as_vector(beta0, "beta0"), as_vector(beta1, "beta1")
    if b0.shape != b1.shape or b0.shape[0] != dataset.dimension:
        raise InvalidConfigError(
            f"dimension mismatch: beta0 {b0.shape[0]}, beta1 {b1.shape[0]}, dataset d={dataset.dimension}")
    statistic = (cox_engine.log_partial_likelihood(dataset, b0)
                 - cox_engine.log_partial_likelihood(dataset, b1))
    scale = 0.0 if noise_off else llr_sensitivity(b0, b1, dataset.n, dataset.covariate_bound) / budget.epsilon
    noise = laplace_noise(scale, rng)
    logger.debug(f"Binary LRT: n={dataset.n}, laplace scale={scale:.6g}")
    ledger = BudgetLedger()
    ledger.charge("llr_laplace", PrivacyBudget(budget.epsilon, 0.0))
    return TestResult(statistic=statistic, noise=noise, threshold=threshold,
                      reject=bool(statistic + noise < threshold),
                      budget=ledger.total(), ledger=ledger)


def _score_norm(dataset: SurvivalDataset, beta0: np.ndarray) -> float:
    return float(np.linalg.norm(cox_engine.score(dataset, beta0)) / math.sqrt(dataset.n))


def score_test_oracle(dataset: SurvivalDataset, beta0: Sequence[float], budget: PrivacyBudget,
                      tau: float, rng: Optional[np.random.Generator],
                      noise_off: bool = False) -> TestResult:
    """Private score test with a supplied threshold tau; rejects when the statistic exceeds tau."""
    _check_epsilon(budget.epsilon)
    _check_nonempty(dataset)
    if math.isnan(tau):
        raise InvalidConfigError("tau must not be NaN")
    b0 = as_vector(beta0, "beta0")
    if b0.shape[0] != dataset.dimension:
        raise InvalidConfigError(f"beta0 has dimension {b0.shape[0]}, dataset has d={dataset.dimension}")
    statistic = _score_norm(dataset, b0)
    scale = 0.0 if noise_off else score_sensitivity(b0, dataset.n, dataset.covariate_bound) / budget.epsilon
    noise = laplace_noise(scale, rng)
    ledger = BudgetLedger()
    ledger.charge("score_laplace", PrivacyBudget(budget.epsilon, 0.0))
    return TestResult(statistic=statistic, noise=noise, threshold=tau,
                      reject=bool(statistic + noise > tau),
                      budget=ledger.total(), ledger=ledger)


def score_threshold(trace_value: float, c1: float, c2: float, d: int, n: int, epsilon: float,
                    beta0: Sequence[float], covariate_bound: float = 1.0) -> float:
    """tau = sqrt(trace) + c1 / sqrt(d) + c2 C_{b0} (1 + log n) / (sqrt(n) eps)."""
    if d < 1 or n < 1:
        raise InvalidConfigError(f"d and n must be >= 1, got d={d}, n={n}")
    if not trace_value >= 0:
        raise InvalidConfigError(f"trace_value must be >= 0, got {trace_value}")
    _check_epsilon(epsilon)
    privacy_term = c2 * single_constant(beta0, covariate_bound) * (1 + math.log(n)) / (math.sqrt(n) * epsilon)
    return math.sqrt(trace_value) + c1 / math.sqrt(d) + privacy_term


def private_trace_estimate(dataset_half: SurvivalDataset, beta0: Sequence[float], epsilon: float,
                           rng: Optional[np.random.Generator], noise_off: bool = False) -> TraceEstimate:
    """T = max(0, tr H(D1; b0) + K(|D1|, b0) / eps * W')."""
    _check_epsilon(epsilon)
    _check_nonempty(dataset_half, "dataset half")
    b0 = as_vector(beta0, "beta0")
    raw = cox_engine.hessian_trace(dataset_half, b0)
    if noise_off:
        noise = 0.0
    else:
        scale = trace_sensitivity(dataset_half.n, b0, dataset_half.covariate_bound) / epsilon
        noise = laplace_noise(scale, rng)
    return TraceEstimate(value=max(0.0, raw + noise), raw_trace=raw, noise=noise)


def score_test_plugin(dataset: SurvivalDataset, beta0: Sequence[float], budget: PrivacyBudget,
                      config: ScoreTestConfig, rng: Optional[np.random.Generator],
                      noise_off: bool = False) -> TestResult:
    """Score test with the trace estimated privately on the first half.

    The first ceil(n/2) records give the trace estimate, the remaining floor(n/2)
    records the score statistic. Each half is charged epsilon; the halves are
    disjoint so the union costs (epsilon, 0).
    """
    if dataset.n < 2:
        raise InvalidConfigError(f"plug-in score test needs n >= 2, got {dataset.n}")
    _check_epsilon(budget.epsilon)
    b0 = as_vector(beta0, "beta0")
    if b0.shape[0] != dataset.dimension:
        raise InvalidConfigError(f"beta0 has dimension {b0.shape[0]}, dataset has d={dataset.dimension}")
    first, second = split_halves(dataset)
    trace = private_trace_estimate(first, b0, budget.epsilon, rng, noise_off=noise_off)
    tau = score_threshold(trace.value, config.c1, config.c2, dataset.dimension, second.n,
                          budget.epsilon, b0, dataset.covariate_bound)
    inner = score_test_oracle(second, b0, budget, tau, rng, noise_off=noise_off)
    ledger = BudgetLedger()
    ledger.charge("trace_laplace", PrivacyBudget(budget.epsilon, 0.0), partition="first_half")
    ledger.charge("score_laplace", PrivacyBudget(budget.epsilon, 0.0), partition="second_half")
    return TestResult(statistic=inner.statistic, noise=inner.noise, threshold=tau,
                      reject=inner.reject, budget=ledger.total(), ledger=ledger, trace=trace)


def order_statistic_index(level: float, n_mc: int, tail: str) -> int:
    """0-based index of the calibrated order statistic."""
    q = level if tail == LOWER else 1.0 - level
    # Guard against 0.85 * 10**6 landing just above an integer.
    k = math.ceil(q * n_mc - 1e-9)
    return min(max(k, 1), n_mc) - 1


def calibrate_threshold_mc(null_sampler: Callable[[np.random.Generator], float], level: float,
                           n_mc: int, rng: np.random.Generator, tail: str = UPPER,
                           workers: int = 1, progress: bool = False) -> float:
    """Empirical quantile of n_mc privatized null statistics.

    Lower tail returns the ceil(level * n_mc)-th smallest draw (for tests that
    reject small values), upper tail the ceil((1 - level) * n_mc)-th. Draw i uses
    the i-th spawned sub-stream, so the result does not depend on workers.
    """
    if n_mc < 1:
        raise InvalidConfigError(f"n_mc must be >= 1, got {n_mc}")
    if not 0 < level < 1:
        raise InvalidConfigError(f"level must be in (0, 1), got {level}")
    if tail not in (LOWER, UPPER):
        raise InvalidConfigError(f"tail must be '{LOWER}' or '{UPPER}', got {tail!r}")
    streams = rng.spawn(n_mc)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            draws = list(tqdm(pool.map(null_sampler, streams), total=n_mc,
                              desc="monte carlo", disable=not progress))
    else:
        draws = [null_sampler(s) for s in tqdm(streams, desc="monte carlo", disable=not progress)]
    values = np.asarray(draws, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericInputError(f"null sampler returned a non-finite value at draw {bad}: {values[bad]}")
    values.sort()
    threshold = float(values[order_statistic_index(level, n_mc, tail)])
    logger.info(f"Calibrated {tail}-tail threshold at level {level} from {n_mc} draws: {threshold:.6g}")
    return threshold
