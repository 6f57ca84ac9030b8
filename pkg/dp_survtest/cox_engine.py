"""Cox log partial likelihood, score, negative normalized Hessian and its trace.

All quantities are built from one pass over the observations sorted by time:
suffix sums of w_j = exp(beta'Z_j - m_k), w_j Z_j and w_j Z_j Z_j' give S0, S1, S2
over every risk set {j : T_j >= t}. The shift m_k follows the largest linear
predictor still at risk, so late risk sets do not underflow. Tied times share
the risk set of the first record in the tie (Breslow). Only events with
T <= 1 contribute terms; any record with T >= t stays in the risk set.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data_model import SurvivalDataset
from .exceptions import InvalidConfigError, InvariantViolation, NumericInputError
from .utility import as_vector

logger = logging.getLogger("dp_survtest.cox_engine")


# Events after this time are not integrated over.
HORIZON = 1.0
# Width of the bands the per-position shift is rounded to; exp(eta - shift) stays below e^500.
SHIFT_STEP = 500.0


@dataclass(frozen=True)
class RiskSetState:
    """Sorted event structure with risk-set sums evaluated at beta.

    Arrays are indexed by sorted position k. s0, s1, s2_trace (and s2 when
    requested) hold the sums over the risk set of the record at position k,
    all scaled by exp(-shift[k]).
    """
    beta: np.ndarray
    order: np.ndarray
    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    eta: np.ndarray
    shift: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2_trace: np.ndarray
    s2: Optional[np.ndarray]
    n: int

    @property
    def event_positions(self) -> np.ndarray:
        """Events observed on the closed interval [0, 1]; later events only sit in risk sets."""
        return np.flatnonzero((self.status == 1) & (self.times <= HORIZON))

    def at_risk_weight(self, position: int) -> float:
        """S0 at the time of the record at this sorted position (unscaled)."""
        return float(self.s0[position] * np.exp(self.shift[position]))

    def risk_set_mean(self) -> np.ndarray:
        """Weighted covariate mean Zbar at every sorted position."""
        return self.s1 / self.s0[:, None]


def _check_beta(dataset: SurvivalDataset, beta: Sequence[float]) -> np.ndarray:
    if dataset.dimension == 0 and np.size(beta) == 0:
        return np.zeros(0)
    beta = as_vector(beta, "beta")
    if beta.shape[0] != dataset.dimension:
        raise InvalidConfigError(f"beta has dimension {beta.shape[0]}, dataset has d={dataset.dimension}")
    return beta


def _scaled_suffix_sums(eta: np.ndarray, columns: Sequence[np.ndarray]):
    """Suffix sums of exp(eta_j - shift_k) * column_j for every position k.

    shift_k is the suffix maximum of eta rounded down to a multiple of
    SHIFT_STEP, so it is non-increasing in k and S0 at k is at least 1.
    Positions sharing a shift form one block; blocks are summed from the end
    and the running total is rescaled when the shift steps up.
    """
    n = eta.size
    sums = [np.zeros_like(c, dtype=float) for c in columns]
    if n == 0:
        return np.zeros(0), sums
    shift = SHIFT_STEP * np.floor(np.maximum.accumulate(eta[::-1])[::-1] / SHIFT_STEP)
    bounds = np.concatenate(([0], np.flatnonzero(np.diff(shift)) + 1, [n]))
    carry = [np.zeros(c.shape[1:]) for c in columns]
    carry_shift = None
    for lo, hi in zip(bounds[-2::-1], bounds[:0:-1]):
        m = shift[lo]
        w = np.exp(eta[lo:hi] - m)
        scale = 1.0 if carry_shift is None else np.exp(carry_shift - m)
        for i, c in enumerate(columns):
            weighted = w.reshape((-1,) + (1,) * (c.ndim - 1)) * c[lo:hi]
            block = np.cumsum(weighted[::-1], axis=0)[::-1] + carry[i] * scale
            sums[i][lo:hi] = block
            carry[i] = block[0]
        carry_shift = m
    return shift, sums


def risk_set_state(dataset: SurvivalDataset, beta: Sequence[float],
                   second_moment: bool = False) -> RiskSetState:
    """Sort once and accumulate the risk-set sums from the largest time down."""
    beta = _check_beta(dataset, beta)
    if not np.all(np.isfinite(dataset.covariates)):
        raise NumericInputError("covariates contain non-finite values")
    n, d = dataset.n, dataset.dimension
    # Ascending time, ties in ascending original index.
    order = np.lexsort((np.arange(n), dataset.times))
    times = dataset.times[order]
    status = dataset.status[order]
    z = dataset.covariates[order]
    eta = z @ beta if d else np.zeros(n)

    columns = [np.ones(n), z, np.einsum("ij,ij->i", z, z)]
    if second_moment:
        columns.append(np.einsum("ij,ik->ijk", z, z))
    shift, sums = _scaled_suffix_sums(eta, columns)

    # First sorted position sharing each record's time.
    start = np.searchsorted(times, times, side="left")
    s0, s1, s2_trace = sums[0][start], sums[1][start], sums[2][start]
    s2 = sums[3][start] if second_moment else None
    if np.any((status == 1) & ~(s0 > 0)):
        raise InvariantViolation("empty risk set at an event time")
    return RiskSetState(beta=beta, order=order, times=times, status=status, covariates=z,
                        eta=eta, shift=shift[start], s0=s0, s1=s1, s2_trace=s2_trace, s2=s2, n=n)


def log_partial_likelihood(dataset: SurvivalDataset, beta: Sequence[float],
                           state: Optional[RiskSetState] = None) -> float:
    """l_n(beta) = sum over events of beta'Z_i - log sum_{j at risk} exp(beta'Z_j)."""
    state = state or risk_set_state(dataset, beta)
    events = state.event_positions
    if events.size == 0:
        return 0.0
    log_s0 = state.shift[events] + np.log(state.s0[events])
    return float(np.sum(state.eta[events] - log_s0))


def score(dataset: SurvivalDataset, beta: Sequence[float],
          state: Optional[RiskSetState] = None) -> np.ndarray:
    """Gradient of l_n: sum over events of Z_i - Zbar(T_i, beta)."""
    state = state or risk_set_state(dataset, beta)
    events = state.event_positions
    if events.size == 0:
        return np.zeros(state.covariates.shape[1])
    zbar = state.risk_set_mean()[events]
    return np.sum(state.covariates[events] - zbar, axis=0)


def neg_hessian(dataset: SurvivalDataset, beta: Sequence[float],
                state: Optional[RiskSetState] = None) -> np.ndarray:
    """H(D; beta) = -l_n''(beta) / n, a sum of weighted risk-set covariances."""
    if state is None or state.s2 is None:
        state = risk_set_state(dataset, beta, second_moment=True)
    d = state.covariates.shape[1]
    events = state.event_positions
    if events.size == 0:
        return np.zeros((d, d))
    s0 = state.s0[events]
    zbar = state.risk_set_mean()[events]
    second = state.s2[events] / s0[:, None, None]
    cov = second - np.einsum("ij,ik->ijk", zbar, zbar)
    h = cov.sum(axis=0) / state.n
    return (h + h.T) / 2.0


def hessian_trace(dataset: SurvivalDataset, beta: Sequence[float],
                  state: Optional[RiskSetState] = None) -> float:
    """tr H(D; beta) from squared-norm sums, without forming H."""
    state = state or risk_set_state(dataset, beta)
    events = state.event_positions
    if events.size == 0:
        return 0.0
    s0 = state.s0[events]
    zbar = state.risk_set_mean()[events]
    terms = state.s2_trace[events] / s0 - np.einsum("ij,ij->i", zbar, zbar)
    return max(0.0, float(terms.sum() / state.n))


@dataclass(frozen=True)
class PartialLikelihoodOutput:
    """All four engine outputs at one beta."""
    loglik: float
    score: np.ndarray
    neg_hessian_over_n: np.ndarray
    trace: float

    def to_json(self):
        return {
            "loglik": self.loglik,
            "score": self.score.tolist(),
            "neg_hessian_over_n": self.neg_hessian_over_n.tolist(),
            "trace": self.trace,
        }


def evaluate(dataset: SurvivalDataset, beta: Sequence[float]) -> PartialLikelihoodOutput:
    """Evaluate likelihood, score, Hessian and trace from one shared state."""
    state = risk_set_state(dataset, beta, second_moment=True)
    return PartialLikelihoodOutput(
        loglik=log_partial_likelihood(dataset, beta, state),
        score=score(dataset, beta, state),
        neg_hessian_over_n=neg_hessian(dataset, beta, state),
        trace=hessian_trace(dataset, beta, state),
    )
