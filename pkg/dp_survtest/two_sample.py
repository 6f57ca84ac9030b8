"""Distributed two-sample test on cumulative hazards.

Each Server keeps its dataset private and publishes only a DP curve. The
coordinator functions accept curves, never datasets, and compare their sup
distance against a threshold.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .data_model import SurvivalDataset, generate_hazard_sample
from .dp_core import PrivacyBudget
from .exceptions import InfeasibleParametersError, InvalidConfigError
from .hazard_estimator import DPHazardCurve, DyadicCurve, dp_nelson_aalen, sup_distance

logger = logging.getLogger("dp_survtest.two_sample")


@dataclass(frozen=True, eq=False)
class ServerConfig:
    dataset: SurvivalDataset
    budget: PrivacyBudget
    server_id: str

    def __post_init__(self):
        if self.budget.delta <= 0:
            raise InfeasibleParametersError("delta must be > 0", self.server_id)
        if self.dataset.dimension != 0:
            raise InvalidConfigError(f"server {self.server_id}: dataset must be covariate-free")


class Server:
    """Holds one dataset and releases its private curve."""

    def __init__(self, config: ServerConfig, rng: Optional[np.random.Generator]):
        self._config = config
        self._rng = rng
        self.server_id = config.server_id
        self.budget = config.budget
        self.n = config.dataset.n

    def release(self, noise_off: bool = False) -> DPHazardCurve:
        curve = dp_nelson_aalen(self._config.dataset, self.budget, self._rng,
                                noise_off=noise_off, server_id=self.server_id)
        logger.debug(f"Server {self.server_id} released a depth-{curve.depth} curve")
        return curve


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    threshold: float
    reject: bool
    curves: Sequence[DyadicCurve]
    budgets: Dict[str, PrivacyBudget]

    def to_json(self):
        return {
            "statistic": self.statistic,
            "threshold": self.threshold,
            "reject": self.reject,
            "budgets": {k: v.to_json() for k, v in self.budgets.items()},
        }


def _server_term(n: int, epsilon: float, delta: float) -> float:
    if n < 1:
        raise InvalidConfigError(f"n must be >= 1, got {n}")
    if not epsilon > 0:
        raise InvalidConfigError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise InvalidConfigError(f"delta must be in (0, 1), got {delta}")
    log_term = math.log2(min(math.sqrt(n), n * epsilon))
    return n ** -0.5 + log_term ** 2 * math.log(1 / delta) / (n * epsilon)


def two_sample_threshold(n1: int, n2: int, eps1: float, eps2: float, delta1: float,
                         delta2: float, c: float) -> float:
    """tau = c * sum_k [n_k^-1/2 + log2(min(sqrt n_k, n_k eps_k))^2 log(1/delta_k) / (n_k eps_k)]."""
    if not c > 0:
        raise InvalidConfigError(f"c must be > 0, got {c}")
    return c * (_server_term(n1, eps1, delta1) + _server_term(n2, eps2, delta2))


def coordinate(curve1: DyadicCurve, curve2: DyadicCurve, threshold: float,
               budgets: Optional[Dict[str, PrivacyBudget]] = None) -> TwoSampleResult:
    """Join step: only exchanged curves enter here."""
    statistic = sup_distance(curve1, curve2)
    return TwoSampleResult(statistic=statistic, threshold=threshold,
                           reject=bool(statistic > threshold), curves=(curve1, curve2),
                           budgets=dict(budgets or {}))


def _release_both(server1: Server, server2: Server, noise_off: bool, concurrent: bool):
    if not concurrent:
        return server1.release(noise_off), server2.release(noise_off)
    with ThreadPoolExecutor(max_workers=2) as pool:
        f1 = pool.submit(server1.release, noise_off)
        f2 = pool.submit(server2.release, noise_off)
        return f1.result(), f2.result()


def run_two_sample_test(server1: ServerConfig, server2: ServerConfig, c: float,
                        rng1: Optional[np.random.Generator], rng2: Optional[np.random.Generator],
                        threshold: Optional[float] = None, noise_off: bool = False,
                        concurrent: bool = False) -> TwoSampleResult:
    """Each server privatizes with its own stream; rejects when the sup distance exceeds tau."""
    if server1.server_id == server2.server_id:
        raise InvalidConfigError(f"server ids must differ, both are {server1.server_id!r}")
    if threshold is None:
        threshold = two_sample_threshold(server1.dataset.n, server2.dataset.n,
                                         server1.budget.epsilon, server2.budget.epsilon,
                                         server1.budget.delta, server2.budget.delta, c)
    a, b = Server(server1, rng1), Server(server2, rng2)
    curve1, curve2 = _release_both(a, b, noise_off, concurrent)
    return coordinate(curve1, curve2, threshold,
                      {a.server_id: curve1.budget, b.server_id: curve2.budget})


def run_one_sample_test(server: ServerConfig, reference: DyadicCurve, threshold: float,
                        rng: Optional[np.random.Generator], noise_off: bool = False) -> TwoSampleResult:
    """Compare one server's private curve with a pre-specified null curve."""
    curve = Server(server, rng).release(noise_off)
    return coordinate(curve, reference, threshold, {server.server_id: curve.budget})


def one_sample_null_sampler(n: int, budget: PrivacyBudget, reference: DyadicCurve, rate: float = 1.0,
                            censor_rate: float = 0.3) -> Callable[[np.random.Generator], float]:
    """Sup distance between a fresh private curve drawn under Exp(rate) and the reference."""
    def sample(rng: np.random.Generator) -> float:
        data = generate_hazard_sample(rate, censor_rate, n, rng)
        return sup_distance(dp_nelson_aalen(data, budget, rng), reference)
    return sample


def two_sample_null_sampler(n1: int, n2: int, budget1: PrivacyBudget, budget2: PrivacyBudget,
                            rate: float = 1.0, censor_rate: float = 0.3) -> Callable[[np.random.Generator], float]:
    """Sup distance between two private curves from the same Exp(rate) population."""
    def sample(rng: np.random.Generator) -> float:
        d1 = generate_hazard_sample(rate, censor_rate, n1, rng)
        d2 = generate_hazard_sample(rate, censor_rate, n2, rng)
        return sup_distance(dp_nelson_aalen(d1, budget1, rng), dp_nelson_aalen(d2, budget2, rng))
    return sample
