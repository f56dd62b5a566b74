"""Constant-rate Markov machinery.

Generators, transition matrices and the default-time laws of a firm whose
state is a continuous-time Markov chain with constant transition rates.
States are numbered ``1..K`` in the public API and state ``K`` is the default
state.

Time units are never converted: rates are "per unit of time" for whatever
unit ``N`` is expressed in (days in the bundled data).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ._validation import check_scalar, check_square_matrix, check_time_in_period
from .exceptions import DegenerateInputError, InvalidInputError

GENERATOR_TOL = 1e-10


@dataclass(frozen=True)
class GeneratorMatrix:
    """Transition-rate matrix of a K-state chain (rows sum to zero).

    Parameters
    ----------
    rates : array-like of shape (K, K)
        Off-diagonal entries are the jump intensities ``lambda_{i,j}``; the
        diagonal holds ``-lambda_i``.
    """

    rates: np.ndarray

    def __post_init__(self):
        a = check_square_matrix(self.rates, "rates", min_size=2).copy()
        off = a - np.diag(np.diag(a))
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.any(off < -GENERATOR_TOL * scale):
            raise InvalidInputError("generator off-diagonal entries must be >= 0")
        if np.any(np.abs(a.sum(axis=1)) > GENERATOR_TOL * scale):
            raise InvalidInputError("generator rows must sum to 0")
        a.setflags(write=False)
        object.__setattr__(self, "rates", a)

    @property
    def K(self):
        return self.rates.shape[0]

    @classmethod
    def two_state(cls, lambda1, lambda2):
        return cls(np.array([[-lambda1, lambda1], [lambda2, -lambda2]], dtype=float))


@dataclass(frozen=True)
class TwoStateRates:
    """Rates of the two-state chain: ``lambda1`` for 1->2 and ``lambda2`` for 2->1."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        object.__setattr__(self, "lambda1",
                           check_scalar(self.lambda1, "lambda1", lower=0.0,
                                        lower_inclusive=False))
        object.__setattr__(self, "lambda2", check_scalar(self.lambda2, "lambda2", lower=0.0))

    def generator(self):
        return GeneratorMatrix.two_state(self.lambda1, self.lambda2)


@dataclass(frozen=True)
class PaymentSchedule:
    """Payment dates ``N_i = i*N`` and the index cap for truncated infinite sums."""

    N: float
    i_max: int = 25

    def __post_init__(self):
        object.__setattr__(self, "N", check_scalar(self.N, "N", lower=0.0,
                                                   lower_inclusive=False))
        object.__setattr__(self, "i_max", check_scalar(self.i_max, "i_max", lower=1,
                                                       integer=True))

    def payment_date(self, i):
        return i * self.N


def _as_generator(A):
    return A if isinstance(A, GeneratorMatrix) else GeneratorMatrix(A)


def matrix_exponential(A, dt):
    """Transition matrix ``P(0, dt) = exp(A dt)`` of a constant-rate chain.

    Parameters
    ----------
    A : GeneratorMatrix or array-like
    dt : float
        Non-negative time step.

    Returns
    -------
    ndarray of shape (K, K)
    """
    A = _as_generator(A)
    dt = check_scalar(dt, "dt", lower=0.0)
    if dt == 0.0:
        return np.eye(A.K)
    return expm(A.rates * dt)


def two_state_transition(r, dt):
    """Closed-form ``exp(A dt)`` for the two-state chain."""
    dt = check_scalar(dt, "dt", lower=0.0)
    l1, l2 = r.lambda1, r.lambda2
    total = l1 + l2
    if total == 0.0:
        raise DegenerateInputError("lambda1 + lambda2 must be positive")
    e = np.exp(-total * dt)
    p1, p2 = l1 / total, l2 / total
    return np.array([
        [p1 * e + p2, p1 - p1 * e],
        [p2 - p2 * e, p2 * e + p1],
    ])


def _check_start_state(s0, K):
    s0 = check_scalar(s0, "s0", lower=1, integer=True)
    if s0 >= K:
        raise InvalidInputError(f"s0 must be a non-default state in 1..{K - 1}, got {s0}")
    return s0


def prop2_constant_law(A, sched, i, t, s0=1):
    """``P(tau_e in (N_i, N_i + t])`` for a constant-rate chain started in ``s0``.

    The probability that the chain avoids the default state at every payment
    date ``N_1..N_i``, enters default inside ``(N_i, N_i + t]`` and then stays
    there until ``N_{i+1}``. For ``i = 0`` the product over earlier periods
    is empty (the identity).
    """
    A = _as_generator(A)
    K = A.K
    s0 = _check_start_state(s0, K)
    i = check_scalar(i, "i", lower=0, integer=True)
    t = check_time_in_period(t, sched.N)
    P_full = matrix_exponential(A, sched.N)
    P_inner = P_full[:K - 1, :K - 1]
    P_t = matrix_exponential(A, t)[:K - 1, :]
    prod = np.linalg.matrix_power(P_inner, i) if i > 0 else np.eye(K - 1)
    entry = (prod @ P_t)[s0 - 1, K - 1]
    lam_K = -A.rates[K - 1, K - 1]
    return float(entry * np.exp(-lam_K * (sched.N - t)))


def constant_recorded_law(A, sched, i, s0=1):
    """``P(tau_r = N_{i+1})``; the ``t = N`` case of :func:`prop2_constant_law`."""
    return prop2_constant_law(A, sched, i, sched.N, s0)


def two_state_q(r, N):
    """Probability of being back in state 1 at the next payment date after starting in 1."""
    total = r.lambda1 + r.lambda2
    return r.lambda1 / total * np.exp(-total * N) + r.lambda2 / total


def two_state_tau_e_law(r, N, i, t):
    """Closed form of ``P(tau_e in (N_i, N_i + t])`` for the two-state chain."""
    l1, l2 = r.lambda1, r.lambda2
    total = l1 + l2
    q = two_state_q(r, N)
    return q ** i * (l1 / total) * (-np.expm1(-total * t)) * np.exp(-l2 * (N - t))


def two_state_recorded_law(r, N, i):
    """``P(tau_r = N_{i+1}) = q**i * (1 - q)``."""
    check_scalar(N, "N", lower=0.0, lower_inclusive=False)
    i = check_scalar(i, "i", lower=0, integer=True)
    q = two_state_q(r, N)
    return float(q ** i * (1.0 - q))


def two_state_gap_survival(r, N, t):
    """``P(tau_r - tau_e > t)`` for the two-state chain, ``0 <= t <= N``.

    Accepts a scalar or an array of times.
    """
    N = check_scalar(N, "N", lower=0.0, lower_inclusive=False)
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0) or np.any(t_arr > N * (1 + 1e-12)):
        raise InvalidInputError(f"t must lie in [0, {N}]")
    t_arr = np.clip(t_arr, 0.0, N)
    l1, l2 = r.lambda1, r.lambda2
    # E * exp(l1 t) rewritten to avoid overflow for large l1 * t
    num = np.exp(-l2 * t_arr) - np.exp(-l2 * N - l1 * (N - t_arr))
    den = -np.expm1(-(l1 + l2) * N)
    out = num / den
    return float(out) if out.ndim == 0 else out


def two_state_gap_density(r, N, t):
    """Analytic density of the gap, ``-d/dt`` of :func:`two_state_gap_survival`."""
    t = np.asarray(t, dtype=float)
    l1, l2 = r.lambda1, r.lambda2
    num = l2 * np.exp(-l2 * t) + l1 * np.exp(-l2 * N - l1 * (N - t))
    out = num / (-np.expm1(-(l1 + l2) * N))
    return float(out) if out.ndim == 0 else out
