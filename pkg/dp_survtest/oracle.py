"""Brute-force re-derivations used to verify the fast code paths.

Nothing here shares the sorted suffix-sum strategy of cox_engine or the tree of
hazard_estimator: risk sets are rebuilt from scratch for every event.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Sequence

import numpy as np
from scipy.special import logsumexp

from .data_model import (CensoredObservation, SimulationConfig, SurvivalDataset,
                         generate_cox_dataset, neighboring_dataset)
from .exceptions import InvalidConfigError, NumericInputError
from .hazard_estimator import DPHazardCurve

logger = logging.getLogger("dp_survtest.oracle")

FD_STEP = 1e-5
PROPOSALS = ("covariates", "time", "status")


def relative_error(value, reference) -> float:
    """max |value - reference| / max(1, |reference|) over all entries."""
    value, reference = np.asarray(value, dtype=float), np.asarray(reference, dtype=float)
    return float(np.max(np.abs(value - reference) / np.maximum(1.0, np.abs(reference)), initial=0.0))


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[np.ndarray], float], x: Sequence[float],
                               step: float = FD_STEP) -> np.ndarray:
    """Central differences (f(x + h e_j) - f(x - h e_j)) / 2h per coordinate."""
    if not step > 0:
        raise InvalidConfigError(f"step must be > 0, got {step}")
    x = np.asarray(x, dtype=float)
    grad = np.zeros(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        hi, lo = float(f(x + e)), float(f(x - e))
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NumericInputError(f"function is not finite near x along coordinate {j}")
        grad[j] = (hi - lo) / (2 * step)
    return grad


def finite_difference_jacobian(g: Callable[[np.ndarray], np.ndarray], x: Sequence[float],
                               step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian; row i is the gradient of g_i."""
    if not step > 0:
        raise InvalidConfigError(f"step must be > 0, got {step}")
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        hi, lo = np.asarray(g(x + e), dtype=float), np.asarray(g(x - e), dtype=float)
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise NumericInputError(f"function is not finite near x along coordinate {j}")
        columns.append((hi - lo) / (2 * step))
    return np.column_stack(columns) if columns else np.zeros((0, 0))


# ---------------------------------------------------------------------------
# Cox quantities by direct double loops
# ---------------------------------------------------------------------------

def _counted_event(dataset: SurvivalDataset, i: int) -> bool:
    return dataset.status[i] == 1 and dataset.times[i] <= 1.0


def _risk_set(dataset: SurvivalDataset, i: int) -> np.ndarray:
    return np.array([j for j in range(dataset.n) if dataset.times[j] >= dataset.times[i]])


def brute_force_log_partial_likelihood(dataset: SurvivalDataset, beta: Sequence[float]) -> float:
    beta = np.asarray(beta, dtype=float)
    eta = dataset.covariates @ beta if dataset.dimension else np.zeros(dataset.n)
    total = 0.0
    for i in range(dataset.n):
        if _counted_event(dataset, i):
            total += eta[i] - logsumexp(eta[_risk_set(dataset, i)])
    return float(total)


def _weighted_moments(dataset: SurvivalDataset, beta: np.ndarray, i: int):
    risk = _risk_set(dataset, i)
    z = dataset.covariates[risk]
    eta = z @ beta
    w = np.exp(eta - eta.max())
    w /= w.sum()
    mean = w @ z
    second = (z * w[:, None]).T @ z
    return mean, second


def brute_force_score(dataset: SurvivalDataset, beta: Sequence[float]) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    total = np.zeros(dataset.dimension)
    for i in range(dataset.n):
        if _counted_event(dataset, i):
            mean, _ = _weighted_moments(dataset, beta, i)
            total += dataset.covariates[i] - mean
    return total


def brute_force_neg_hessian(dataset: SurvivalDataset, beta: Sequence[float]) -> np.ndarray:
    """(1/n) sum over events of the weighted risk-set covariance."""
    beta = np.asarray(beta, dtype=float)
    d = dataset.dimension
    total = np.zeros((d, d))
    for i in range(dataset.n):
        if _counted_event(dataset, i):
            mean, second = _weighted_moments(dataset, beta, i)
            total += second - np.outer(mean, mean)
    return total / max(dataset.n, 1)


# ---------------------------------------------------------------------------
# Neighbour search
# ---------------------------------------------------------------------------

@dataclass
class SensitivitySearchReport:
    max_observed: float
    bound: float
    trials: int
    witness: Dict[str, Any] = field(default_factory=dict)
    non_finite: bool = False

    @property
    def passed(self) -> bool:
        return not self.non_finite and self.max_observed <= self.bound * (1 + 1e-12) + 1e-15

    def to_json(self):
        return {"max_observed": self.max_observed, "bound": self.bound, "trials": self.trials,
                "passed": self.passed, "witness": self.witness}


def _propose(dataset: SurvivalDataset, kind: str, index: int,
             rng: np.random.Generator) -> CensoredObservation:
    old = dataset[index]
    d = dataset.dimension
    if kind == "covariates":
        corner = rng.choice([-1.0, 1.0], size=d) * dataset.covariate_bound / math.sqrt(d)
        return CensoredObservation(old.time, old.status, tuple(corner))
    if kind == "time":
        near = rng.uniform(0.0, 1e-3)
        time = near if rng.random() < 0.5 else 1.0 - near
        return CensoredObservation(time, old.status, old.covariates)
    return CensoredObservation(old.time, 1 - old.status, old.covariates)


def _difference(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b)) if a.ndim else float(abs(a - b))


def empirical_sensitivity_search(statistic: Callable[[SurvivalDataset], Any], bound: float,
                                 base_config: SimulationConfig, trials: int,
                                 rng: np.random.Generator) -> SensitivitySearchReport:
    """Randomized search for the neighbour pair with the largest statistic change.

    Each trial draws a base dataset and replaces one record by an extremal
    covariate corner, a time near 0 or 1, or a flipped status.
    """
    if trials < 1:
        raise InvalidConfigError(f"trials must be >= 1, got {trials}")
    kinds = PROPOSALS if base_config.d > 0 else PROPOSALS[1:]
    report = SensitivitySearchReport(max_observed=0.0, bound=bound, trials=trials)
    for trial in range(trials):
        base = generate_cox_dataset(base_config, rng)
        if base.n == 0:
            raise InvalidConfigError("base_config generates empty datasets")
        index = int(rng.integers(base.n))
        kind = kinds[trial % len(kinds)]
        neighbour = neighboring_dataset(base, index, _propose(base, kind, index, rng))
        gap = _difference(statistic(base), statistic(neighbour))
        if not math.isfinite(gap):
            report.non_finite = True
            report.witness = {"trial": trial, "index": index, "proposal": kind, "difference": gap}
            logger.warning(f"Non-finite statistic at trial {trial} ({kind} proposal)")
            break
        if gap > report.max_observed:
            report.max_observed = gap
            report.witness = {"trial": trial, "index": index, "proposal": kind, "difference": gap}
    logger.info(f"Sensitivity search: max {report.max_observed:.6g} vs bound {bound:.6g} over {trials} trials")
    return report


# ---------------------------------------------------------------------------
# Nelson-Aalen checks
# ---------------------------------------------------------------------------

def _event_jumps(dataset: SurvivalDataset, floor: float):
    times, jumps = [], []
    for i in range(dataset.n):
        if dataset.status[i] == 1:
            at_risk = int(np.count_nonzero(dataset.times >= dataset.times[i]))
            times.append(float(dataset.times[i]))
            jumps.append(1.0 / max(floor, at_risk))
    return np.array(times), np.array(jumps)


def clamped_nelson_aalen(dataset: SurvivalDataset, t: float, floor: float = 0.0) -> float:
    """sum over events T_i <= t of 1 / max(floor, #{j : T_j >= T_i})."""
    times, jumps = _event_jumps(dataset, floor)
    return float(np.sum(jumps[times <= t]))


def exhaustive_na_check(dataset: SurvivalDataset, curve: DPHazardCurve, clamped: bool = True) -> float:
    """Largest gap between a noise-off curve and the direct estimator on the grid m / 2^h.

    The direct estimator uses the retained last n' records and, when clamped,
    the same denominator floor c n' as the curve. At t = 0 the curve is 0.
    """
    if not curve.noise_off:
        raise InvalidConfigError("exhaustive_na_check needs a curve built with noise off")
    retained = dataset.subset(slice(dataset.n - curve.n_prime, dataset.n))
    floor = curve.clamp * curve.n_prime if clamped else 0.0
    times, jumps = _event_jumps(retained, floor)
    worst = 0.0
    cells = 2 ** curve.depth
    for m in range(1, cells):
        t = m / cells
        worst = max(worst, abs(curve.evaluate(t) - float(np.sum(jumps[times <= t]))))
    return max(worst, abs(curve.evaluate(0.0)))
