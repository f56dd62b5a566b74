import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FITTED, N_DAYS, degenerate, gap_tail
from default_times.affine import AffineParams
from default_times.exceptions import EmptyLawError, InvalidInputError
from default_times.law import EigenStructure
from default_times.markov import PaymentSchedule, two_state_gap_survival
from default_times.simulate import (SimConfig, counter_uniform, empirical_gap_law,
                                    simulate_chain, simulate_default_times, simulate_factor,
                                    stream_key)

DT = N_DAYS / 1800


@pytest.fixture(scope="module")
def es_const():
    return EigenStructure.from_generator(FITTED.generator().rates)


def test_counter_streams_are_distinct():
    keys = {int(stream_key(0, p, s)) for p in range(50) for s in range(1, 6)}
    assert len(keys) == 250
    u = np.array([counter_uniform(stream_key(3, 0, 1), c) for c in range(20000)])
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / u.size)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SimConfig(n_paths=0, dt=0.1)
    with pytest.raises(InvalidInputError):
        SimConfig(n_paths=10, dt=0.0)
    with pytest.raises(InvalidInputError):
        SimConfig(n_paths=10, dt=0.1, horizon=0)
    with pytest.raises(InvalidInputError):
        SimConfig(n_paths=10, dt=0.1, scheme="milstein")
    with pytest.raises(InvalidInputError, match="N/10"):
        SimConfig(n_paths=10, dt=20.0).steps_per_period(N_DAYS)
    assert SimConfig(n_paths=1, dt=18.0).steps_per_period(N_DAYS) == 10
    assert SimConfig(n_paths=1, dt=0.07).effective_dt(N_DAYS) <= 0.07


@pytest.mark.parametrize("scheme", ["qe", "euler"])
def test_deterministic_relaxation(scheme):
    p = AffineParams(kappa=0.8, theta=1.0, sigma=0.0, lambda_J=0.0, gamma=0.0, x0=3.0)
    dt = 0.01
    x = simulate_factor(p, SimConfig(n_paths=3, dt=dt, scheme=scheme), 10.0)
    t = dt * np.arange(x.shape[1])
    exact = p.theta + (p.x0 - p.theta) * np.exp(-p.kappa * t)
    assert np.max(np.abs(x - exact)) < 5 * p.kappa * abs(p.x0 - p.theta) * dt


@pytest.mark.parametrize("scheme", ["qe", "euler"])
def test_cir_long_run_mean(scheme):
    p = AffineParams(kappa=1.0, theta=1.0, sigma=1.0, lambda_J=0.0, gamma=0.0, x0=3.0)
    x = simulate_factor(p, SimConfig(n_paths=100_000, dt=0.01, seed=5, scheme=scheme), 10.0)
    last = x[:, -1]
    se = last.std(ddof=1) / math.sqrt(last.size)
    # the mean at t = 10 / kappa still carries (x0 - theta) e^{-10} of the start
    mean = p.theta + (p.x0 - p.theta) * math.exp(-10.0)
    assert abs(last.mean() - mean) < 3 * se
    assert x.min() >= 0.0


def test_zero_jump_size_equals_no_jumps():
    base = AffineParams(kappa=1.0, theta=1.0, sigma=2.0, lambda_J=0.0, gamma=0.0, x0=1.0)
    cfg = SimConfig(n_paths=200, dt=0.05, seed=9)
    a = simulate_factor(base, cfg, 5.0)
    b = simulate_factor(base.replace(lambda_J=3.0), cfg, 5.0)
    np.testing.assert_array_equal(a, b)


def test_jumps_raise_the_mean():
    p = AffineParams(kappa=1.0, theta=1.0, sigma=0.5, lambda_J=0.5, gamma=2.0, x0=1.0)
    x = simulate_factor(p, SimConfig(n_paths=20_000, dt=0.02, seed=2), 10.0)
    # stationary mean theta + lambda_J gamma / kappa
    assert abs(x[:, -1].mean() - 2.0) < 0.1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.sampled_from(["qe", "euler"]))
def test_simulation_is_deterministic(seed, scheme):
    es = EigenStructure.from_matrix([[-0.9992, -0.7071], [0.0400, -0.7071]], [-0.52, 0.0])
    p = AffineParams(1.0, 1.0, 5.0, 0.2, 0.1, 1.0)
    sched = PaymentSchedule(N_DAYS)
    cfg = SimConfig(n_paths=64, dt=1.8, seed=seed, horizon=5, scheme=scheme)
    a = simulate_default_times(es, p, sched, cfg)
    b = simulate_default_times(es, p, sched, cfg)
    np.testing.assert_array_equal(a.tau_e, b.tau_e)
    np.testing.assert_array_equal(a.tau_r, b.tau_r)


def test_chain_on_stored_paths_matches_joint(es_sweeps, sweep_params):
    sched = PaymentSchedule(N_DAYS)
    cfg = SimConfig(n_paths=300, dt=1.8, seed=17, horizon=4)
    joint = simulate_default_times(es_sweeps, sweep_params, sched, cfg)
    x = simulate_factor(sweep_params, cfg, cfg.horizon * N_DAYS)
    split = simulate_chain(es_sweeps, x, sched, cfg)
    np.testing.assert_array_equal(joint.tau_e, split.tau_e)
    np.testing.assert_array_equal(joint.tau_r, split.tau_r)
    np.testing.assert_array_equal(joint.censored, split.censored)


def test_chain_rejects_short_paths_and_default_start(es_sweeps, sweep_params):
    sched = PaymentSchedule(N_DAYS)
    cfg = SimConfig(n_paths=2, dt=1.8, horizon=3)
    with pytest.raises(InvalidInputError, match="horizon"):
        simulate_chain(es_sweeps, np.ones((2, 10)), sched, cfg)
    with pytest.raises(InvalidInputError, match="default state"):
        simulate_default_times(es_sweeps, sweep_params, sched, cfg, s0=2)
    with pytest.raises(InvalidInputError, match="default state"):
        simulate_chain(es_sweeps, np.ones((2, 301)), sched, cfg, s0=2)


def test_no_default_possible_is_all_censored():
    # lambda_1(x) = 0 for every x: state 1 is absorbing
    es = EigenStructure.from_matrix([[0.0, 1.0], [1.0, 1.0]], [-0.3, 0.0])
    np.testing.assert_allclose(es.generator(1.0)[0], 0.0, atol=1e-15)
    sched = PaymentSchedule(N_DAYS)
    res = simulate_default_times(es, AffineParams(1.0, 1.0, 1.0, 0.2, 0.5, 1.0), sched,
                                 SimConfig(n_paths=500, dt=1.8, horizon=3))
    assert res.censored.all()
    with pytest.raises(EmptyLawError):
        empirical_gap_law(res)


def test_single_path_law(es_const):
    res = simulate_default_times(es_const, degenerate(), PaymentSchedule(N_DAYS),
                                 SimConfig(n_paths=1, dt=DT, seed=4))
    law = empirical_gap_law(res)
    assert law.n_paths == 1 and law.counts.sum() + law.n_censored == 1


def test_law_invariants(es_const):
    res = simulate_default_times(es_const, degenerate(), PaymentSchedule(N_DAYS),
                                 SimConfig(n_paths=5000, dt=DT, seed=8, horizon=2))
    law = empirical_gap_law(res, bins=10)
    assert np.all((law.gap_samples >= 0) & (law.gap_samples <= N_DAYS))
    assert law.counts.sum() == law.n_paths - law.n_censored
    assert law.recorded_counts.sum() == law.n_observed
    assert 0.0 <= law.censored_fraction < 1.0
    np.testing.assert_allclose(law.frequency.sum(), 1.0)
    assert len(law.rows()) == 10


@pytest.fixture(scope="module")
def constant_run(es_const):
    cfg = SimConfig(n_paths=100_000, dt=DT, seed=2024)
    return simulate_default_times(es_const, degenerate(), PaymentSchedule(N_DAYS), cfg)


def test_constant_rates_against_closed_form(constant_run):
    law = empirical_gap_law(constant_run)
    for t in (0.0, N_DAYS / 4, N_DAYS / 2):
        p, _ = law.survival(t)
        exact = two_state_gap_survival(FITTED, N_DAYS, t)
        se = math.sqrt(max(exact * (1 - exact), 1e-300) / law.n_observed)
        assert abs(p - exact) <= 3 * se or exact == 1.0 and p == 1.0


def test_constant_rates_ks(constant_run):
    law = empirical_gap_law(constant_run)
    d = law.ks_distance(lambda t: 1.0 - gap_tail(FITTED, N_DAYS, t))
    assert d < 1.63 / math.sqrt(law.n_observed)


def test_recorded_counts_geometric(constant_run):
    law = empirical_gap_law(constant_run)
    lam = FITTED.lambda1 + FITTED.lambda2
    q = FITTED.lambda1 / lam * math.exp(-lam * N_DAYS) + FITTED.lambda2 / lam
    expected = (1 - q) * q ** np.arange(law.recorded_counts.size) * law.n_observed
    k = min(5, law.recorded_counts.size)
    chi = np.sum((law.recorded_counts[:k] - expected[:k]) ** 2 / expected[:k])
    assert chi < 20.5  # 99.9% quantile of chi-square with 5 degrees of freedom


@pytest.mark.slow
def test_dt_refinement(es_const):
    sched = PaymentSchedule(N_DAYS)
    t = N_DAYS / 2
    est = []
    for dt in (DT, DT / 2):
        res = simulate_default_times(es_const, degenerate(), sched,
                                     SimConfig(n_paths=100_000, dt=dt, seed=99))
        est.append(empirical_gap_law(res).survival(t))
    (p1, s1), (p2, s2) = est
    assert abs(p1 - p2) < math.hypot(s1, s2)
