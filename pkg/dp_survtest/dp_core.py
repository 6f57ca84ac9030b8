"""Noise mechanisms, privacy budgets and closed-form sensitivity bounds.

The sensitivity functions are pure formula evaluators: they never look at data,
so the noise scale of every mechanism is data-independent. "log" is the natural
logarithm throughout.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import InvalidConfigError
from .utility import as_vector

logger = logging.getLogger("dp_survtest.dp_core")


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) pair."""
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidConfigError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise InvalidConfigError(f"delta must be in [0, 1), got {self.delta}")

    @property
    def pure(self) -> bool:
        return self.delta == 0

    def to_json(self):
        return {"epsilon": self.epsilon, "delta": self.delta}


@dataclass(frozen=True)
class LedgerEntry:
    label: str
    partition: str
    budget: PrivacyBudget


@dataclass
class BudgetLedger:
    """Records mechanism charges and composes them.

    Charges on the same partition of the data add up (sequential composition);
    totals of disjoint partitions combine by maximum (parallel composition).
    """
    entries: List[LedgerEntry] = field(default_factory=list)

    def charge(self, label: str, budget: PrivacyBudget, partition: str = "full") -> None:
        logger.debug(f"Budget charge {label} on {partition}: eps={budget.epsilon}, delta={budget.delta}")
        self.entries.append(LedgerEntry(label, partition, budget))

    def partition_totals(self) -> Dict[str, Tuple[float, float]]:
        totals: Dict[str, Tuple[float, float]] = {}
        for entry in self.entries:
            eps, delta = totals.get(entry.partition, (0.0, 0.0))
            totals[entry.partition] = (eps + entry.budget.epsilon, delta + entry.budget.delta)
        return totals

    def total(self) -> PrivacyBudget:
        totals = self.partition_totals()
        if not totals:
            raise InvalidConfigError("ledger has no charges")
        return PrivacyBudget(max(e for e, _ in totals.values()), max(d for _, d in totals.values()))

    def is_parallel(self) -> bool:
        """True when every partition was charged exactly once."""
        return len(self.partition_totals()) == len(self.entries) > 1

    def to_json(self):
        return [{"label": e.label, "partition": e.partition, **e.budget.to_json()} for e in self.entries]


@dataclass(frozen=True)
class SensitivityConstants:
    """c_{b0,b1}, C_{b0} and K(n, b0) for one configuration."""
    c_pair: float
    c_single: float
    k_trace: float


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def laplace_from_uniform(u: float, scale: float) -> float:
    """Inverse CDF of Laplace(0, scale) at u in (-1/2, 1/2)."""
    if scale < 0:
        raise InvalidConfigError(f"Laplace scale must be >= 0, got {scale}")
    if scale == 0 or u == 0:
        return 0.0
    return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def laplace_noise(scale: float, rng: np.random.Generator) -> float:
    """One Laplace(0, scale) draw; scale 0 returns exactly 0 without drawing."""
    if scale < 0 or not math.isfinite(scale):
        raise InvalidConfigError(f"Laplace scale must be finite and >= 0, got {scale}")
    if scale == 0:
        return 0.0
    u = rng.random() - 0.5
    while u == -0.5:
        u = rng.random() - 0.5
    return laplace_from_uniform(u, scale)


def gaussian_noise(std: float, rng: np.random.Generator) -> float:
    """One N(0, std^2) draw; std 0 returns exactly 0 without drawing."""
    if std < 0 or not math.isfinite(std):
        raise InvalidConfigError(f"Gaussian std must be finite and >= 0, got {std}")
    if std == 0:
        return 0.0
    return float(std * rng.standard_normal())


# ---------------------------------------------------------------------------
# Sensitivity formulas
# ---------------------------------------------------------------------------

def _check_bound(covariate_bound: float) -> None:
    if not (covariate_bound > 0 and math.isfinite(covariate_bound)):
        raise InvalidConfigError(f"covariate bound must be positive, got {covariate_bound}")


def pair_constant(beta0: Sequence[float], beta1: Sequence[float], covariate_bound: float) -> float:
    """c_{b0,b1} = 4 C_Z + exp(2 max(|b0|, |b1|) C_Z) (2 C_Z + C_Z^2)."""
    _check_bound(covariate_bound)
    radius = max(float(np.linalg.norm(as_vector(beta0, "beta0"))) if np.size(beta0) else 0.0,
                 float(np.linalg.norm(as_vector(beta1, "beta1"))) if np.size(beta1) else 0.0)
    cz = covariate_bound
    return 4 * cz + math.exp(2 * radius * cz) * (2 * cz + cz ** 2)


def single_constant(beta0: Sequence[float], covariate_bound: float) -> float:
    """C_{b0} = 4 C_Z + exp(2 C_Z |b0|) (2 C_Z + C_Z^2)."""
    return pair_constant(beta0, beta0, covariate_bound)


def llr_sensitivity(beta0: Sequence[float], beta1: Sequence[float], n: int,
                    covariate_bound: float = 1.0) -> float:
    """Sensitivity of l_n(b0) - l_n(b1): c_{b0,b1} (1 + log n) |b0 - b1|."""
    if n < 1:
        raise InvalidConfigError(f"n must be >= 1, got {n}")
    b0, b1 = as_vector(beta0, "beta0"), as_vector(beta1, "beta1")
    if b0.shape != b1.shape:
        raise InvalidConfigError(f"beta0 and beta1 differ in dimension: {b0.shape[0]} vs {b1.shape[0]}")
    separation = float(np.linalg.norm(b0 - b1))
    return pair_constant(b0, b1, covariate_bound) * (1 + math.log(n)) * separation


def score_sensitivity(beta0: Sequence[float], n: int, covariate_bound: float = 1.0) -> float:
    """Sensitivity of |score(b0)| / sqrt(n): C_{b0} (1 + log n) / sqrt(n)."""
    if n < 1:
        raise InvalidConfigError(f"n must be >= 1, got {n}")
    return single_constant(beta0, covariate_bound) * (1 + math.log(n)) / math.sqrt(n)


def trace_sensitivity(n: float, beta0: Sequence[float], covariate_bound: float = 1.0) -> float:
    """K(n, b0): sensitivity bound of tr H(D; b0), of order log(n)/n."""
    if n < 2:
        raise InvalidConfigError(f"n must be >= 2, got {n}")
    _check_bound(covariate_bound)
    cz = covariate_bound
    a = cz * (float(np.linalg.norm(as_vector(beta0, "beta0"))) if np.size(beta0) else 0.0)
    log_n = math.log(n)
    e2, e3, e4 = math.exp(2 * a), math.exp(3 * a), math.exp(4 * a)
    bracket = (2
               + e2 * (6 + 4 * log_n)
               + 2 * e4
               + (e3 * (1 + log_n) + 6 * e2) / n
               + 2 * e4 * (1 + log_n) / n ** 2)
    return cz ** 2 / n * bracket


def sensitivity_constants(beta0: Sequence[float], beta1: Sequence[float], n: int,
                          covariate_bound: float = 1.0) -> SensitivityConstants:
    return SensitivityConstants(
        c_pair=pair_constant(beta0, beta1, covariate_bound),
        c_single=single_constant(beta0, covariate_bound),
        k_trace=trace_sensitivity(n, beta0, covariate_bound),
    )
