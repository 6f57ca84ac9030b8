"""Differentially private Nelson-Aalen estimation over a dyadic tree.

The unit interval is cut into 2^h cells ((m-1)/2^h, m/2^h]. Each leaf holds the
Nelson-Aalen increment of its cell, internal nodes hold the sums of their
children, and every node gets independent Gaussian noise. A cumulative value at
t is the sum of at most h nodes picked by the binary digits of floor(2^h t).
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, TextIO, Tuple, Union

import numpy as np

from .data_model import SurvivalDataset
from .dp_core import BudgetLedger, PrivacyBudget, gaussian_noise
from .exceptions import DatasetValidationError, InfeasibleParametersError, InvalidConfigError
from .utility import format_float

logger = logging.getLogger("dp_survtest.hazard_estimator")

HEAD_FRACTION = 0.05
CLAMP_FACTOR = 0.9
CURVE_HEADER = ["grid_index", "t_left", "value"]
NON_PRIVATE_STAMP = "# NON-PRIVATE"


def _check_t(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise InvalidConfigError(f"t must be in [0, 1], got {t}")


def cell_index(t: float, depth: int) -> int:
    """floor(2^h t), with t = 1 mapped to the last cell."""
    _check_t(t)
    return min(int(math.floor(t * 2 ** depth)), 2 ** depth - 1)


class DyadicCurve:
    """A cumulative hazard that is constant on each cell [k/2^h, (k+1)/2^h)."""

    depth: int

    def cell_values(self) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, t: float) -> float:
        return float(self.cell_values()[cell_index(t, self.depth)])

    @property
    def grid(self) -> np.ndarray:
        """Left endpoints k/2^h of the cells."""
        return np.arange(2 ** self.depth) / 2 ** self.depth


@dataclass(frozen=True, eq=False)
class GridCurve(DyadicCurve):
    """Per-cell values on a dyadic grid; the form in which curves are exchanged."""
    depth: int
    values: np.ndarray
    private: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise InvalidConfigError(f"curve depth must be >= 1, got {self.depth}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (2 ** self.depth,):
            raise InvalidConfigError(f"expected {2 ** self.depth} cell values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidConfigError("curve values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], depth: int) -> "GridCurve":
        """Sample a closed-form cumulative hazard at the cell left endpoints."""
        grid = np.arange(2 ** depth) / 2 ** depth
        return cls(depth=depth, values=np.asarray(fn(grid), dtype=float), private=False)

    def cell_values(self) -> np.ndarray:
        return self.values


@dataclass(frozen=True, eq=False)
class DPHazardCurve(DyadicCurve):
    """Output of dp_nelson_aalen.

    tree[l - 1] holds the 2^l post-noise nodes of level l = 1..h; tree[-1] are
    the leaves.
    """
    p_hat: float
    n_prime: int
    clamp: float
    clamp_floored: bool
    depth: int
    tree: Tuple[np.ndarray, ...]
    budget: PrivacyBudget
    ledger: BudgetLedger = field(default_factory=BudgetLedger)
    noise_off: bool = False

    @property
    def private(self) -> bool:
        return not self.noise_off

    @property
    def size(self) -> int:
        return sum(level.size for level in self.tree)

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[-1]

    def evaluate(self, t: float) -> float:
        """max(0, sum of nodes selected by the set bits of floor(2^h t))."""
        k = cell_index(t, self.depth)
        total = 0.0
        for level in range(1, self.depth + 1):
            shift = self.depth - level
            if (k >> shift) & 1:
                total += self.tree[level - 1][(k >> shift) - 1]
        return max(0.0, float(total))

    def cell_values(self) -> np.ndarray:
        k = np.arange(2 ** self.depth)
        total = np.zeros(k.size)
        for level in range(1, self.depth + 1):
            prefix = k >> (self.depth - level)
            selected = (prefix & 1).astype(bool)
            total[selected] += self.tree[level - 1][prefix[selected] - 1]
        return np.maximum(total, 0.0)

    def to_grid(self) -> GridCurve:
        return GridCurve(depth=self.depth, values=self.cell_values(), private=self.private)

    def to_json(self):
        return {
            "p_hat": self.p_hat,
            "n_prime": self.n_prime,
            "clamp": self.clamp,
            "clamp_floored": self.clamp_floored,
            "depth": self.depth,
            "budget": self.budget.to_json(),
            "ledger": self.ledger.to_json(),
            "values": self.cell_values().tolist(),
        }


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function on [0, 1]; zero before the first breakpoint."""
    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.shape != vals.shape or bp.ndim != 1:
            raise InvalidConfigError("breakpoints and values must be 1-D arrays of equal length")
        if bp.size and np.any(np.diff(bp) <= 0):
            raise InvalidConfigError("breakpoints must be strictly ascending")
        if not np.all(np.isfinite(vals)):
            raise InvalidConfigError("step values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        padded = np.concatenate(([0.0], self.values))
        out = padded[idx + 1]
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Algorithm
# ---------------------------------------------------------------------------

def tree_depth(n_prime: int, epsilon: float) -> int:
    """h = floor(log2(min(n', n'^2 eps^2)) / 2); may be < 1 for tiny inputs."""
    m = min(n_prime, (n_prime * epsilon) ** 2)
    if m <= 0:
        return 0
    return int(math.floor(0.5 * math.log2(m)))


def _require_covariate_free(dataset: SurvivalDataset) -> None:
    if dataset.dimension != 0:
        raise InvalidConfigError(f"hazard estimation expects a covariate-free dataset, got d={dataset.dimension}")


def build_tree(leaves: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Bottom-up sums: level l has 2^l nodes, x[l, m] = x[l+1, 2m-1] + x[l+1, 2m]."""
    levels = [np.asarray(leaves, dtype=float)]
    while levels[0].size > 2:
        child = levels[0]
        levels.insert(0, child[0::2] + child[1::2])
    return tuple(levels)


def leaf_increments(retained: SurvivalDataset, depth: int, floor: float) -> np.ndarray:
    """Nelson-Aalen jumps 1 / max(floor, #at risk) summed into dyadic cells.

    An event at time T falls in cell max(1, ceil(T 2^h)) (1-based); events after
    t = 1 are dropped.
    """
    cells = 2 ** depth
    leaves = np.zeros(cells)
    times = retained.times
    events = np.flatnonzero((retained.status == 1) & (times <= 1.0))
    if events.size == 0:
        return leaves
    sorted_times = np.sort(times)
    at_risk = times.size - np.searchsorted(sorted_times, times[events], side="left")
    jumps = 1.0 / np.maximum(floor, at_risk)
    slot = np.maximum(np.ceil(times[events] * cells).astype(int), 1) - 1
    np.add.at(leaves, slot, jumps)
    return leaves


def tree_noise_std(clamp: float, n_prime: int, depth: int, budget: PrivacyBudget) -> float:
    """Standard deviation of the per-node Gaussian noise."""
    eps, delta = budget.epsilon, budget.delta
    variance = ((1 / clamp ** 4 + 3 / clamp ** 2)
                * (2 * math.log(1 / delta) / eps + 1)
                * depth / (n_prime ** 2 * eps))
    return math.sqrt(variance)


def dp_nelson_aalen(dataset: SurvivalDataset, budget: PrivacyBudget,
                    rng: Optional[np.random.Generator], noise_off: bool = False,
                    server_id: Optional[str] = None) -> DPHazardCurve:
    """Private cumulative hazard on [0, 1].

    The first floor(0.05 n) records, in stored order, estimate the fraction still
    at risk at t = 1; the remaining n' records feed the tree.
    """
    _require_covariate_free(dataset)
    n = dataset.n
    head = int(math.floor(HEAD_FRACTION * n))
    if budget.delta <= 0:
        raise InfeasibleParametersError("delta must be > 0 for the Gaussian mechanism", server_id)
    if head == 0:
        raise InfeasibleParametersError(f"n={n} leaves no records to estimate the at-risk fraction", server_id)
    n_prime = n - head
    depth = tree_depth(n_prime, budget.epsilon)
    if depth < 1:
        raise InfeasibleParametersError(
            f"tree depth {depth} < 1 for n'={n_prime}, eps={budget.epsilon}", server_id)

    head_data = dataset.subset(slice(0, head))
    p_std = 0.0 if noise_off else math.sqrt(2 * math.log(1.25 / budget.delta)) / (n * budget.epsilon)
    p_hat = float(np.mean(head_data.times >= 1.0)) + gaussian_noise(p_std, rng)
    floor_value = 1.0 / n_prime
    clamp = max(CLAMP_FACTOR * p_hat, floor_value)
    clamp_floored = CLAMP_FACTOR * p_hat < floor_value
    if clamp_floored:
        logger.warning(f"At-risk estimate {p_hat:.4g} too small; clamp floored at 1/n'={floor_value:.4g}")

    retained = dataset.subset(slice(head, n))
    leaves = leaf_increments(retained, depth, clamp * n_prime)
    tree = build_tree(leaves)
    std = 0.0 if noise_off else tree_noise_std(clamp, n_prime, depth, budget)
    logger.debug(f"Hazard tree: n'={n_prime}, h={depth}, clamp={clamp:.4g}, node std={std:.4g}")
    if std > 0:
        tree = tuple(level + std * rng.standard_normal(level.size) for level in tree)
    for level in tree:
        level.setflags(write=False)

    ledger = BudgetLedger()
    ledger.charge("at_risk_gaussian", budget, partition="head")
    ledger.charge("tree_gaussian", budget, partition="tail")
    return DPHazardCurve(p_hat=p_hat, n_prime=n_prime, clamp=clamp, clamp_floored=clamp_floored,
                         depth=depth, tree=tree, budget=ledger.total(), ledger=ledger,
                         noise_off=noise_off)


def evaluate(curve: DyadicCurve, t: float) -> float:
    return curve.evaluate(t)


def nelson_aalen(dataset: SurvivalDataset) -> StepFunction:
    """Classical estimator sum over events T_i <= t of 1 / #{j : T_j >= T_i}."""
    times = dataset.times
    event_times = np.unique(times[dataset.status == 1])
    if event_times.size == 0:
        return StepFunction(np.zeros(1), np.zeros(1))
    sorted_times = np.sort(times)
    at_risk = times.size - np.searchsorted(sorted_times, event_times, side="left")
    counts = np.array([np.sum((times == t) & (dataset.status == 1)) for t in event_times])
    levels = np.cumsum(counts / at_risk)
    if event_times[0] > 0:
        event_times = np.concatenate(([0.0], event_times))
        levels = np.concatenate(([0.0], levels))
    return StepFunction(event_times, levels)


def sup_distance(a: DyadicCurve, b: DyadicCurve) -> float:
    """Exact sup over [0, 1] of |a - b|, evaluated on the finer of the two grids."""
    depth = max(a.depth, b.depth)
    va = np.repeat(a.cell_values(), 2 ** (depth - a.depth))
    vb = np.repeat(b.cell_values(), 2 ** (depth - b.depth))
    return float(np.max(np.abs(va - vb)))


# ---------------------------------------------------------------------------
# CSV exchange: grid_index,t_left,value
# ---------------------------------------------------------------------------

def write_curve_csv(curve: DyadicCurve, target: Union[str, Path, TextIO]) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as f:
            write_curve_csv(curve, f)
        return
    if not getattr(curve, "private", True):
        target.write(NON_PRIVATE_STAMP + "\n")
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for k, (t_left, value) in enumerate(zip(curve.grid, curve.cell_values())):
        writer.writerow([k, format_float(t_left), format_float(value)])


def parse_curve_csv(handle: TextIO) -> GridCurve:
    private = True
    rows = []
    header_seen = False
    for line_no, raw in enumerate(handle, start=1):
        text = raw.strip()
        if not text:
            continue
        if text.startswith("#"):
            if text == NON_PRIVATE_STAMP:
                private = False
            continue
        fields = next(csv.reader([text]))
        if not header_seen:
            if [f.strip() for f in fields] != CURVE_HEADER:
                raise DatasetValidationError(f"header must be {','.join(CURVE_HEADER)}", line=line_no)
            header_seen = True
            continue
        if len(fields) != 3:
            raise DatasetValidationError(f"expected 3 fields, got {len(fields)}", line=line_no)
        try:
            k, t_left, value = int(fields[0]), float(fields[1]), float(fields[2])
        except ValueError:
            raise DatasetValidationError(f"malformed row {text!r}", line=line_no)
        if k != len(rows):
            raise DatasetValidationError(f"grid_index {k} out of sequence, expected {len(rows)}", line=line_no)
        if not math.isfinite(value):
            raise DatasetValidationError(f"value {fields[2]!r} is not finite", line=line_no)
        rows.append((t_left, value, line_no))
    if not header_seen:
        raise DatasetValidationError("empty curve file", line=1)
    cells = len(rows)
    if cells < 2 or cells & (cells - 1):
        raise DatasetValidationError(f"number of cells {cells} is not a power of two >= 2")
    for k, (t_left, _, line_no) in enumerate(rows):
        if abs(t_left - k / cells) > 1e-12:
            raise DatasetValidationError(f"t_left {t_left} does not match cell {k}/{cells}", line=line_no)
    return GridCurve(depth=cells.bit_length() - 1, values=np.array([v for _, v, _ in rows]), private=private)


def read_curve_csv(path: Union[str, Path]) -> GridCurve:
    with open(path, newline="") as f:
        return parse_curve_csv(f)
