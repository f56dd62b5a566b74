import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (CLOSED_FORM_TOL, FITTED, N_DAYS, ROW_SUM_TOL, gap_tail, taylor_expm,
                      window_mass)
from default_times.exceptions import DegenerateInputError, InvalidInputError
from default_times.markov import (GeneratorMatrix, PaymentSchedule, TwoStateRates,
                                  constant_recorded_law, matrix_exponential,
                                  prop2_constant_law, two_state_gap_density,
                                  two_state_gap_survival, two_state_q,
                                  two_state_recorded_law, two_state_transition)

rate = st.floats(1e-3, 5.0)


@st.composite
def generators(draw, max_k=6):
    K = draw(st.integers(2, max_k))
    off = np.array(draw(st.lists(st.floats(0.0, 3.0), min_size=K * K, max_size=K * K)))
    A = off.reshape(K, K)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def test_generator_rejects_bad_rows():
    with pytest.raises(InvalidInputError, match="sum to 0"):
        GeneratorMatrix([[-1.0, 0.5], [1.0, -1.0]])
    with pytest.raises(InvalidInputError, match=">= 0"):
        GeneratorMatrix([[1.0, -1.0], [1.0, -1.0]])
    with pytest.raises(InvalidInputError):
        GeneratorMatrix([[-1.0, np.nan], [1.0, -1.0]])
    with pytest.raises(InvalidInputError):
        GeneratorMatrix([[0.0]])


def test_expm_at_zero_is_identity():
    A = GeneratorMatrix.two_state(0.3631, 0.0238)
    np.testing.assert_array_equal(matrix_exponential(A, 0.0), np.eye(2))


def test_expm_hand_value():
    P = matrix_exponential([[-1.0, 1.0], [1.0, -1.0]], math.log(4) / 2)
    assert P[0, 0] == pytest.approx(0.625, abs=1e-14)
    np.testing.assert_allclose(P, taylor_expm([[-1, 1], [1, -1]], math.log(4) / 2),
                               atol=1e-14)


def test_expm_long_horizon_rows():
    A = FITTED.generator()
    P = matrix_exponential(A, 180.0)
    assert np.max(np.abs(P.sum(axis=1) - 1.0)) < ROW_SUM_TOL
    np.testing.assert_allclose(P, taylor_expm(A.rates, 180.0), atol=1e-12)


def test_expm_rejects_negative_time():
    with pytest.raises(InvalidInputError):
        matrix_exponential(FITTED.generator(), -1.0)


@settings(max_examples=60, deadline=None)
@given(generators(), st.floats(0.0, 50.0))
def test_expm_is_stochastic(A, dt):
    P = matrix_exponential(A, dt)
    assert np.max(np.abs(P.sum(axis=1) - 1.0)) < ROW_SUM_TOL
    assert P.min() >= -1e-12
    np.testing.assert_allclose(P, taylor_expm(A, dt), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(generators(max_k=4), st.floats(0.0, 1800.0), st.floats(0.0, 1800.0))
def test_expm_semigroup(A, s, t):
    # rates up to 3/day over 10 N keep the entries away from denormals
    lhs = matrix_exponential(A, s) @ matrix_exponential(A, t)
    np.testing.assert_allclose(lhs, matrix_exponential(A, s + t), atol=1e-9)


def test_two_state_transition_values():
    r = TwoStateRates(1.0, 1.0)
    np.testing.assert_array_equal(two_state_transition(r, 0.0), np.eye(2))
    np.testing.assert_allclose(two_state_transition(r, math.log(4) / 2),
                               [[0.625, 0.375], [0.375, 0.625]], atol=1e-15)
    far = two_state_transition(FITTED, 1e4)
    lam = FITTED.lambda1 + FITTED.lambda2
    stationary = [FITTED.lambda2 / lam, FITTED.lambda1 / lam]
    np.testing.assert_allclose(far, [stationary, stationary], atol=1e-15)


def test_two_state_transition_degenerate():
    # lambda1 > 0 is a type invariant, so build the zero-rate case by hand
    r = object.__new__(TwoStateRates)
    object.__setattr__(r, "lambda1", 0.0)
    object.__setattr__(r, "lambda2", 0.0)
    with pytest.raises(DegenerateInputError):
        two_state_transition(r, 1.0)


def test_two_state_transition_matches_expm_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(100):
        l1, l2 = rng.uniform(1e-3, 5.0, 2)
        dt = rng.uniform(0.0, 50.0)
        r = TwoStateRates(l1, l2)
        np.testing.assert_allclose(two_state_transition(r, dt),
                                   matrix_exponential(r.generator(), dt),
                                   atol=CLOSED_FORM_TOL, rtol=0)


def test_prop2_trivial_and_errors():
    sched = PaymentSchedule(N_DAYS)
    A = FITTED.generator()
    assert prop2_constant_law(A, sched, 0, 0.0) == 0.0
    with pytest.raises(InvalidInputError):
        prop2_constant_law(A, sched, 0, N_DAYS + 1.0)
    with pytest.raises(InvalidInputError):
        prop2_constant_law(A, sched, 0, -1.0)
    with pytest.raises(InvalidInputError, match="non-default"):
        prop2_constant_law(A, sched, 0, 1.0, s0=2)


@pytest.mark.parametrize("i", [0, 1, 2, 5])
@pytest.mark.parametrize("t", [1.0, 45.0, 90.0, 180.0])
def test_prop2_matches_closed_form(i, t):
    sched = PaymentSchedule(N_DAYS)
    got = prop2_constant_law(FITTED.generator(), sched, i, t)
    assert got == pytest.approx(window_mass(FITTED, N_DAYS, i, t), abs=CLOSED_FORM_TOL)


def test_recorded_law_consistency():
    r, N = FITTED, 1.0
    q = two_state_q(r, N)
    assert two_state_recorded_law(r, N, 3) == pytest.approx(q ** 3 * (1 - q), abs=1e-15)
    sched = PaymentSchedule(N)
    via_prop2 = constant_recorded_law(r.generator(), sched, 3)
    assert via_prop2 == pytest.approx(q ** 3 * (1 - q), abs=1e-13)


def test_recorded_law_limits():
    r = TwoStateRates(0.5, 0.0)
    assert two_state_recorded_law(r, 200.0, 0) == pytest.approx(1.0, abs=1e-40)
    total = sum(two_state_recorded_law(FITTED, 1.0, i) for i in range(2000))
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(rate, st.floats(0.0, 5.0), st.floats(0.05, 200.0), st.integers(1, 30))
def test_prop2_partial_sums_bound(l1, l2, N, i_max):
    r = TwoStateRates(l1, l2)
    sched = PaymentSchedule(N)
    A = r.generator()
    partial = sum(prop2_constant_law(A, sched, i, N) for i in range(i_max + 1))
    q = two_state_q(r, N)
    assert partial >= 1.0 - q ** (i_max + 1) - 1e-12
    assert partial <= 1.0 + 1e-12


def test_gap_survival_endpoints_and_errors():
    assert two_state_gap_survival(FITTED, N_DAYS, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert two_state_gap_survival(FITTED, N_DAYS, N_DAYS) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(InvalidInputError):
        two_state_gap_survival(FITTED, N_DAYS, 181.0)
    with pytest.raises(InvalidInputError):
        two_state_gap_survival(FITTED, N_DAYS, -0.5)


def test_gap_survival_monotone_fine_grid():
    t = np.linspace(0.0, N_DAYS, 1000)
    S = two_state_gap_survival(FITTED, N_DAYS, t)
    assert np.all(np.diff(S) <= 0.0)
    assert S.min() >= 0.0 and S.max() <= 1.0
    np.testing.assert_allclose(S, gap_tail(FITTED, N_DAYS, t), atol=1e-14)


def test_gap_density_convex_in_ushape_regime():
    t = np.linspace(0.0, N_DAYS, 1000)
    h = t[1] - t[0]
    S = two_state_gap_survival(FITTED, N_DAYS, t)
    dens = -np.gradient(S, h)
    second = np.diff(dens[1:-1], 2)
    assert np.all(second >= -1e-10)
    np.testing.assert_allclose(dens[1:-1], two_state_gap_density(FITTED, N_DAYS, t)[1:-1],
                               rtol=1e-3)


def test_types_reject_invalid():
    with pytest.raises(InvalidInputError):
        TwoStateRates(0.0, 1.0)
    with pytest.raises(InvalidInputError):
        TwoStateRates(1.0, -0.1)
    with pytest.raises(InvalidInputError):
        PaymentSchedule(0.0)
    with pytest.raises(InvalidInputError):
        PaymentSchedule(1.0, i_max=0)
