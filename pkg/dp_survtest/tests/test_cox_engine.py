"""Test the Cox partial-likelihood engine against hand values and brute force."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dp_survtest import cox_engine
from dp_survtest.data_model import SimulationConfig, SurvivalDataset, generate_cox_dataset
from dp_survtest.exceptions import InvalidConfigError
from dp_survtest.oracle import (brute_force_log_partial_likelihood, brute_force_neg_hessian,
                                brute_force_score, finite_difference_gradient,
                                finite_difference_jacobian, relative_error)
from dp_survtest.utility import make_stream


def random_instance(seed, n=40, d=3):
    rng = make_stream(seed)
    beta = rng.uniform(-1, 1, size=d)
    beta /= max(1.0, np.linalg.norm(beta))
    data = generate_cox_dataset(SimulationConfig(n=n, d=d, beta_star=tuple(beta), seed=seed))
    return data, beta


def test_risk_set_sums_dataset_a(dataset_a):
    state = cox_engine.risk_set_state(dataset_a, [0.0])
    assert state.at_risk_weight(0) == pytest.approx(3.0)
    assert state.at_risk_weight(1) == pytest.approx(2.0)


def test_single_observation_risk_set():
    data = SurvivalDataset(np.array([0.4]), np.array([1]), np.array([[0.3]]))
    assert cox_engine.risk_set_state(data, [0.0]).at_risk_weight(0) == pytest.approx(1.0)
    assert cox_engine.score(data, [0.7]) == pytest.approx([0.0])


def test_dataset_a_values(dataset_a):
    out = cox_engine.evaluate(dataset_a, [0.0])
    assert out.loglik == pytest.approx(-(math.log(3) + math.log(2)), abs=1e-6)
    assert out.score == pytest.approx([1.5])
    assert out.neg_hessian_over_n[0, 0] == pytest.approx((2 / 3 + 1 / 4) / 3, abs=1e-6)
    assert out.trace == pytest.approx(0.305556, abs=1e-6)


def test_no_events_gives_zeros():
    data = SurvivalDataset(np.array([0.3, 0.6]), np.array([0, 0]), np.array([[0.5], [-0.5]]))
    assert cox_engine.log_partial_likelihood(data, [0.4]) == 0.0
    assert cox_engine.score(data, [0.4]) == pytest.approx([0.0])
    assert cox_engine.hessian_trace(data, [0.4]) == 0.0


def test_identical_covariates_have_zero_curvature():
    data = SurvivalDataset(np.array([0.1, 0.2, 0.3]), np.array([1, 1, 1]), np.full((3, 2), 0.5))
    assert np.allclose(cox_engine.neg_hessian(data, [0.3, -0.2]), 0.0)
    assert cox_engine.hessian_trace(data, [0.3, -0.2]) == pytest.approx(0.0, abs=1e-12)


def test_constant_shift_leaves_likelihood_unchanged():
    rng = make_stream(4)
    times = rng.random(30)
    status = (rng.random(30) < 0.7).astype(int)
    z = rng.uniform(-0.4, 0.4, size=(30, 1))
    beta = [0.8]
    base = cox_engine.log_partial_likelihood(SurvivalDataset(times, status, z), beta)
    shifted = cox_engine.log_partial_likelihood(SurvivalDataset(times, status, z + 0.5), beta)
    assert shifted == pytest.approx(base, abs=1e-10)


def test_ties_use_the_full_risk_set():
    data = SurvivalDataset(np.array([0.5, 0.5, 0.9]), np.array([1, 1, 0]), np.array([[1.0], [0.0], [0.0]]))
    assert cox_engine.log_partial_likelihood(data, [0.0]) == pytest.approx(-2 * math.log(3))
    assert cox_engine.log_partial_likelihood(data, [0.0]) == pytest.approx(
        brute_force_log_partial_likelihood(data, [0.0]))


def test_dimension_mismatch(dataset_a):
    with pytest.raises(InvalidConfigError):
        cox_engine.score(dataset_a, [0.0, 0.1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_permutation_invariance(seed):
    data, beta = random_instance(seed, n=25)
    perm = make_stream(seed + 1).permutation(data.n)
    shuffled = data.subset(perm)
    assert cox_engine.log_partial_likelihood(shuffled, beta) == pytest.approx(
        cox_engine.log_partial_likelihood(data, beta), abs=1e-10)
    assert np.allclose(cox_engine.score(shuffled, beta), cox_engine.score(data, beta), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    data, beta = random_instance(seed, n=30)
    assert cox_engine.log_partial_likelihood(data, beta) == pytest.approx(
        brute_force_log_partial_likelihood(data, beta), abs=1e-9)
    assert np.allclose(cox_engine.score(data, beta), brute_force_score(data, beta), atol=1e-9)
    assert np.allclose(cox_engine.neg_hessian(data, beta), brute_force_neg_hessian(data, beta), atol=1e-10)


def test_derivatives_match_finite_differences():
    """Score and -n H agree with central differences on 100 random instances."""
    for seed in range(100):
        rng = make_stream(1000 + seed)
        n, d = int(rng.integers(5, 51)), int(rng.integers(1, 6))
        data, beta = random_instance(1000 + seed, n=n, d=d)
        grad = finite_difference_gradient(lambda b: cox_engine.log_partial_likelihood(data, b), beta)
        assert relative_error(cox_engine.score(data, beta), grad) < 1e-5
        jac = finite_difference_jacobian(lambda b: cox_engine.score(data, b), beta)
        assert relative_error(-data.n * cox_engine.neg_hessian(data, beta), jac) < 1e-5


def test_trace_bounds():
    data, beta = random_instance(99, n=60, d=4)
    trace = cox_engine.hessian_trace(data, beta)
    assert 0.0 <= trace <= 4 * data.event_count / data.n
    assert trace == pytest.approx(np.trace(cox_engine.neg_hessian(data, beta)), abs=1e-12)


def test_concavity_along_a_line():
    data, beta = random_instance(17, n=40)
    direction = np.array([1.0, -0.5, 0.25])
    values = [cox_engine.log_partial_likelihood(data, beta + s * direction) for s in (-0.2, 0.0, 0.2)]
    assert values[1] >= (values[0] + values[2]) / 2 - 1e-12


def test_extreme_beta_stays_finite():
    data, _ = random_instance(8, n=40)
    value = cox_engine.log_partial_likelihood(data, [40.0, -30.0, 20.0])
    assert math.isfinite(value)


def test_huge_linear_predictor_matches_brute_force(dataset_a):
    assert cox_engine.log_partial_likelihood(dataset_a, [800.0]) == pytest.approx(
        brute_force_log_partial_likelihood(dataset_a, [800.0]), abs=1e-12)
    assert cox_engine.score(dataset_a, [800.0]) == pytest.approx(brute_force_score(dataset_a, [800.0]), abs=1e-12)
    assert math.isfinite(cox_engine.hessian_trace(dataset_a, [-800.0]))


def test_late_risk_sets_do_not_underflow():
    data, _ = random_instance(23, n=60)
    beta = np.array([1500.0, -900.0, 400.0])
    out = cox_engine.evaluate(data, beta)
    assert relative_error(out.loglik, brute_force_log_partial_likelihood(data, beta)) < 1e-9
    assert relative_error(out.score, brute_force_score(data, beta)) < 1e-9
    assert relative_error(out.neg_hessian_over_n, brute_force_neg_hessian(data, beta)) < 1e-9
    state = cox_engine.risk_set_state(data, beta)
    assert np.all(state.s0 >= 1.0)


def test_events_after_one_only_enter_risk_sets():
    z = np.array([[0.5], [-0.2], [0.9], [0.1]])
    late_event = SurvivalDataset(np.array([0.3, 0.7, 1.5, 2.0]), np.array([1, 1, 1, 0]), z)
    late_censored = SurvivalDataset(np.array([0.3, 0.7, 1.5, 2.0]), np.array([1, 1, 0, 0]), z)
    beta = [0.7]
    for fn in (cox_engine.log_partial_likelihood, cox_engine.score, cox_engine.hessian_trace):
        assert fn(late_event, beta) == pytest.approx(fn(late_censored, beta), abs=1e-15)
    assert cox_engine.log_partial_likelihood(late_event, beta) == pytest.approx(
        brute_force_log_partial_likelihood(late_event, beta), abs=1e-12)
    # the record at 1.5 still sits in the earlier risk sets
    dropped = SurvivalDataset(np.array([0.3, 0.7, 2.0]), np.array([1, 1, 0]), z[[0, 1, 3]])
    assert cox_engine.log_partial_likelihood(late_event, beta) != pytest.approx(
        cox_engine.log_partial_likelihood(dropped, beta))


def test_event_at_one_is_counted():
    z = np.array([[0.5], [0.0]])
    at_one = SurvivalDataset(np.array([1.0, 1.2]), np.array([1, 0]), z)
    assert cox_engine.log_partial_likelihood(at_one, [0.0]) == pytest.approx(-math.log(2))
    assert cox_engine.score(at_one, [0.0]) == pytest.approx([0.25])


@pytest.mark.parametrize("seed", range(100))
def test_hessian_is_positive_semidefinite(seed):
    rng = make_stream(1000 + seed)
    data, beta = random_instance(1000 + seed, n=int(rng.integers(2, 51)), d=int(rng.integers(1, 6)))
    h = cox_engine.neg_hessian(data, beta)
    assert np.linalg.eigvalsh(h).min() >= -1e-10
