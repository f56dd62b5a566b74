"""Default-time laws under stochastic transition rates.

The generator is ``A_X(s) = B diag(mu_1 X_s, ..., mu_{K-1} X_s, 0) B^{-1}``
with constant eigenvectors ``B``, so the conditional transition matrix over
``[s, t]`` is ``B diag(exp(mu_k int_s^t X du)) B^{-1}``. For two states the
distribution of the economic default time reduces to a sum of affine
transforms of the factor; every probability below is assembled from
``exp(alpha + beta X_0)`` terms.

All probabilities take an :class:`~default_times.affine.AffineParams`, a
:class:`~default_times.markov.PaymentSchedule` and an :class:`EigenStructure`.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_scalar, check_square_matrix, check_time_in_period
from .affine import select_backend
from .exceptions import (
    EnumerationLimitError,
    InvalidInputError,
    TransformDivergenceError,
    TruncationError,
)
from .markov import GENERATOR_TOL, two_state_gap_survival

MAX_ENUMERATION_LEVEL = 12
DEFAULT_PRUNE_EPS = 1e-14
DEFAULT_TAIL_EPS = 1e-6


@dataclass(frozen=True)
class TwoStateCoeffs:
    """Products of entries of ``B`` and ``B^{-1}`` used by the two-state laws.

    ``m`` weights a full period spent avoiding default at both ends, ``n``
    the period in which default starts, ``p`` the stay in default.
    """

    m1: float
    m2: float
    n1: float
    n2: float
    p1: float
    p2: float


@dataclass(frozen=True, eq=False)
class EigenStructure:
    """Eigenvectors ``B`` and rate coefficients ``mu`` (last one zero).

    Use :meth:`from_matrix` to build one from user input; it runs the
    admission checks. The generator at factor level ``x`` is
    ``B diag(mu x) B^{-1}``; its sign pattern does not depend on ``x > 0``,
    so checking a finite grid of levels covers every larger level too.
    """

    B: np.ndarray
    B_inv: np.ndarray
    mu: np.ndarray

    @classmethod
    def from_matrix(cls, B, mu, x_grid=(1.0,)):
        B = check_square_matrix(B, "B", min_size=2)
        mu = np.asarray(mu, dtype=float)
        K = B.shape[0]
        if mu.shape != (K,):
            raise InvalidInputError(f"mu must have {K} entries, got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise InvalidInputError("mu has non-finite entries")
        if mu[-1] != 0.0:
            raise InvalidInputError("the last rate coefficient (default state) must be 0")
        if np.linalg.cond(B) > 1e12:
            raise InvalidInputError("B is not invertible")
        B_inv = np.linalg.inv(B)
        if np.max(np.abs(B @ B_inv - np.eye(K))) > 1e-10:
            raise InvalidInputError("B is too ill-conditioned: B @ B_inv deviates from I")
        for a in (B, B_inv, mu):
            a.setflags(write=False)
        es = cls(B, B_inv, mu)
        es.check_generator(x_grid)
        return es

    @classmethod
    def from_generator(cls, A):
        """Eigenstructure of a constant generator, scaled so that ``X == 1`` reproduces it."""
        A = check_square_matrix(A, "A", min_size=2)
        vals, vecs = np.linalg.eig(A)
        if np.max(np.abs(vals.imag)) > 1e-12:
            raise InvalidInputError("generator has complex eigenvalues")
        vals, vecs = vals.real, vecs.real
        zero = int(np.argmin(np.abs(vals)))
        order = [k for k in range(len(vals)) if k != zero] + [zero]
        mu = vals[order]
        mu[-1] = 0.0
        return cls.from_matrix(vecs[:, order], mu)

    @property
    def K(self):
        return self.B.shape[0]

    def generator(self, x=1.0):
        return (self.B * (self.mu * x)) @ self.B_inv

    def check_generator(self, x_grid):
        """Raise :class:`InvalidInputError` naming the first violated condition."""
        for x in x_grid:
            A = self.generator(x)
            scale = max(1.0, float(np.max(np.abs(A))))
            off = A - np.diag(np.diag(A))
            if np.any(off < -GENERATOR_TOL * scale):
                i, j = np.unravel_index(np.argmin(off), off.shape)
                raise InvalidInputError(
                    f"negative off-diagonal rate A[{i + 1},{j + 1}]={off[i, j]:.6g} at x={x:g}")
            rows = np.abs(A.sum(axis=1))
            if np.any(rows > GENERATOR_TOL * scale):
                raise InvalidInputError(
                    f"generator row sum {rows.max():.3g} != 0 at x={x:g}")

    def admit(self, params):
        """Check generator validity on ``{0, x0, theta, theta + 5 gamma}``."""
        self.check_generator(admission_grid(params))
        return self

    def two_state_coeffs(self):
        if self.K != 2:
            raise InvalidInputError("two-state coefficients need K = 2")
        b, bi = self.B, self.B_inv
        return TwoStateCoeffs(
            m1=b[0, 0] * bi[0, 0], m2=b[0, 1] * bi[1, 0],
            n1=b[0, 0] * bi[0, 1], n2=b[0, 1] * bi[1, 1],
            p1=b[1, 0] * bi[0, 1], p2=b[1, 1] * bi[1, 1],
        )


def admission_grid(params):
    return sorted({0.0, params.x0, params.theta, params.theta + 5.0 * params.gamma, 1.0})


def lando_transition(es, integrated_mu):
    """``B diag(exp(integrated_mu)) B^{-1}``."""
    v = np.asarray(integrated_mu, dtype=float)
    if v.shape != (es.K,):
        raise InvalidInputError(f"integrated_mu must have {es.K} entries")
    if v[-1] != 0.0:
        raise InvalidInputError("the default-state entry of integrated_mu must be 0")
    return (es.B * np.exp(v)) @ es.B_inv


@dataclass
class ExpSum:
    """``sum_j a_j exp(b_j x)`` with a record of the pruned mass.

    Attributes
    ----------
    a, b : ndarray
        Coefficients and exponents.
    level : int
        Recursion level ``i`` this sum represents.
    dropped_bound : float
        Upper bound on ``|value(unpruned) - value(pruned)|`` at ``x0 >= 0``.
    """

    a: np.ndarray
    b: np.ndarray
    level: int = 0
    dropped_bound: float = 0.0

    @property
    def terms(self):
        return list(zip(self.a.tolist(), self.b.tolist()))

    def __len__(self):
        return len(self.a)

    def __call__(self, x0):
        return float(np.sum(self.a * np.exp(self.b * x0)))


class _TwoStateEngine:
    """Shared state for the K=2 recursion: coefficients and transform backend."""

    def __init__(self, es, params, sched, backend="auto"):
        if es.K != 2:
            raise InvalidInputError("stochastic-rate laws are implemented for K = 2 only")
        self.es = es
        self.params = params
        self.sched = sched
        self.c = es.two_state_coeffs()
        self.mu = (float(es.mu[0]), float(es.mu[1]))
        self.m = np.array([self.c.m1, self.c.m2])
        self.n = np.array([self.c.n1, self.c.n2])
        # exponent for staying in default: lambda_2(X) = -(p1 mu1 + p2 mu2) X
        self.r_stay = self.c.p1 * self.mu[0] + self.c.p2 * self.mu[1]
        self.transform = select_backend(params, (self.mu[0], self.mu[1], self.r_stay),
                                        (sched.N,), backend)
        # a pruned term can grow by at most |m1| + |m2| per remaining level
        self.growth = float(np.abs(self.m).sum())

    def base(self, tau):
        """Level-0 coefficients for ``P(tau_e in (0, tau])``; ``tau`` is 1-d."""
        tau = np.asarray(tau, dtype=float)
        N = self.sched.N
        a_stay, b_stay = self.transform(self.r_stay, 0.0, N - tau)
        a = np.empty((tau.size, 2))
        b = np.empty((tau.size, 2))
        for k in range(2):
            ak, bk = self.transform(self.mu[k], b_stay, tau)
            a[:, k] = self.n[k] * np.exp(a_stay + ak)
            b[:, k] = bk
        return a, b

    def step(self, a, b):
        """Prepend one full period: level ``i`` -> level ``i + 1``."""
        N = self.sched.N
        blocks_a, blocks_b = [], []
        for k in range(2):
            ak, bk = self.transform(self.mu[k], b, N)
            blocks_a.append(self.m[k] * a * np.exp(ak))
            blocks_b.append(bk)
        return np.concatenate(blocks_a, axis=1), np.concatenate(blocks_b, axis=1)

    def prune(self, a, b, prune_eps, remaining):
        """Zero terms below ``prune_eps`` of the row's total ``|a|`` mass.

        Returns the pruned arrays and the per-row bound on the value change
        at ``x0`` once the remaining levels are applied.
        """
        if prune_eps <= 0 or a.shape[1] <= 2:
            return a, b, np.zeros(a.shape[0])
        mass = np.abs(a).sum(axis=1, keepdims=True)
        drop = (np.abs(a) < prune_eps * mass) & (a != 0.0)
        x0 = self.params.x0
        weight = np.abs(a) * np.exp(np.maximum(b, 0.0) * x0)
        bound = np.where(drop, weight, 0.0).sum(axis=1) * self.growth ** remaining
        a = np.where(drop, 0.0, a)
        b = np.where(drop, 0.0, b)
        keep = np.any(a != 0.0, axis=0)
        if not keep.any():
            keep[0] = True
        return a[:, keep], b[:, keep], bound

    def evaluate(self, a, b):
        return np.sum(a * np.exp(b * self.params.x0), axis=1)


def _check_two_state_args(es, sched, i, t):
    i = check_scalar(i, "i", lower=0, integer=True)
    t = check_time_in_period(t, sched.N)
    if es.K != 2:
        raise InvalidInputError("stochastic-rate laws are implemented for K = 2 only")
    return i, t


def prop3_enumerate(es, params, sched, i, t, backend="auto"):
    """``P(tau_e in (N_i, N_i + t])`` by summing over all ``2**(i+1)`` state paths.

    Each path ``e = (e_0, ..., e_i)`` contributes
    ``n_{e_i} prod_j m_{e_j} E[exp(int mu_hat(e, u) X_u du)]``; the expectation
    is evaluated backwards in time, one Riccati solve per segment.

    Raises
    ------
    EnumerationLimitError
        For ``i > 12``; use :func:`prop4_recursive`.
    """
    i, t = _check_two_state_args(es, sched, i, t)
    if i > MAX_ENUMERATION_LEVEL:
        raise EnumerationLimitError(
            f"enumeration of 2**{i + 1} paths refused for i > {MAX_ENUMERATION_LEVEL}; "
            "use prop4_recursive")
    eng = _TwoStateEngine(es, params, sched, backend)
    N = sched.N
    paths = np.array(list(itertools.product((0, 1), repeat=i + 1)), dtype=int)
    mu = np.array(eng.mu)
    weight = eng.n[paths[:, i]] * np.prod(eng.m[paths[:, :i]], axis=1)
    # segments from the last one backwards: (exponent, length)
    segments = [(np.full(len(paths), eng.r_stay), N - t), (mu[paths[:, i]], t)]
    segments += [(mu[paths[:, j]], N) for j in range(i - 1, -1, -1)]
    log_v = np.zeros(len(paths))
    w = np.zeros(len(paths))
    try:
        for R, length in segments:
            alpha, w = eng.transform(R, w, length)
            log_v = log_v + alpha
    except TransformDivergenceError as exc:
        raise exc.with_level(i) from exc
    return float(np.sum(weight * np.exp(log_v + w * params.x0)))


def prop4_recursive(es, params, sched, i, t, prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    """Exponential-sum representation of ``P(tau_e in (N_i, N_i + t])``.

    Starts from the two level-0 terms and prepends one payment period per
    level. After each level terms whose ``|a|`` is below ``prune_eps`` times
    the total are dropped; :attr:`ExpSum.dropped_bound` bounds the effect.
    """
    i, t = _check_two_state_args(es, sched, i, t)
    prune_eps = check_scalar(prune_eps, "prune_eps", lower=0.0)
    eng = _TwoStateEngine(es, params, sched, backend)
    try:
        a, b = eng.base(np.array([t]))
    except TransformDivergenceError as exc:
        raise exc.with_level(0) from exc
    dropped = 0.0
    for level in range(1, i + 1):
        try:
            a, b = eng.step(a, b)
        except TransformDivergenceError as exc:
            raise exc.with_level(level) from exc
        a, b, bound = eng.prune(a, b, prune_eps, i - level)
        dropped += float(bound[0])
    return ExpSum(a[0].copy(), b[0].copy(), level=i, dropped_bound=dropped)


def tau_e_law(es, params, sched, i, t, prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    return prop4_recursive(es, params, sched, i, t, prune_eps, backend)(params.x0)


def recorded_law(es, params, sched, i, prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    """``P(tau_r = N_{i+1}) = P(tau_e in (N_i, N_{i+1}])``."""
    return tau_e_law(es, params, sched, i, sched.N, prune_eps, backend)


@dataclass
class GapSurvival:
    """Gap survival values on a grid of times with their error bounds."""

    t: np.ndarray
    survival: np.ndarray
    bound: np.ndarray
    levels: int
    recorded: np.ndarray = field(repr=False, default=None)


def gap_survival_curve(es, params, sched, t, tail_eps=DEFAULT_TAIL_EPS,
                       prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    """Vectorised :func:`gap_survival` over an array of times.

    ``P(tau_r - tau_e > t) = sum_i P(tau_e in (N_i, N_{i+1} - t])`` is
    truncated at the first ``k`` for which the tail ``P(tau_r > N_{k+1})``
    plus the pruning bounds drops below ``tail_eps``.
    """
    tail_eps = check_scalar(tail_eps, "tail_eps", lower=0.0, lower_inclusive=False)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    N = sched.N
    if np.any(~np.isfinite(t)) or np.any(t < -1e-12 * N) or np.any(t > N * (1 + 1e-12)):
        raise InvalidInputError(f"t must lie in [0, {N}]")
    t = np.clip(t, 0.0, N)
    eng = _TwoStateEngine(es, params, sched, backend)
    # last row tracks P(tau_r = N_{i+1}) for the tail bound
    tau = np.append(N - t, N)
    try:
        a, b = eng.base(tau)
    except TransformDivergenceError as exc:
        raise exc.with_level(0) from exc
    total = np.zeros(tau.size)
    dropped = np.zeros(tau.size)
    recorded = []
    for level in range(sched.i_max + 1):
        vals = eng.evaluate(a, b)
        total += vals
        recorded.append(vals[-1])
        tail = max(1.0 - total[-1], 0.0)
        bound = tail + dropped[-1] + dropped[:-1]
        if np.all(bound < tail_eps):
            return GapSurvival(t, total[:-1], bound, level, np.array(recorded))
        if level == sched.i_max:
            break
        try:
            a, b = eng.step(a, b)
        except TransformDivergenceError as exc:
            raise exc.with_level(level + 1) from exc
        # bound the pruning effect as if the maximum remaining depth were used
        a, b, pb = eng.prune(a, b, prune_eps, sched.i_max - level - 1)
        dropped += pb
    raise TruncationError(
        f"tail bound {float(np.max(bound)):.3g} still >= {tail_eps:g} at i_max={sched.i_max}",
        bound=float(np.max(bound)))


def gap_survival(es, params, sched, t, tail_eps=DEFAULT_TAIL_EPS,
                 prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    """``(P(tau_r - tau_e > t), error_bound)`` for ``0 <= t <= N``."""
    t = check_time_in_period(t, sched.N)
    res = gap_survival_curve(es, params, sched, [t], tail_eps, prune_eps, backend)
    return float(res.survival[0]), float(res.bound[0])


@dataclass
class GapCurve:
    t: np.ndarray
    survival: np.ndarray
    density: np.ndarray
    tail_bound: np.ndarray


def _difference_density(survival_fn, N, grid_points, step):
    """Central-difference ``-dS/dt`` on a uniform grid; one-sided at the ends."""
    t = np.linspace(0.0, N, grid_points)
    spacing = N / (grid_points - 1)
    h = min(spacing / 10.0, N / 1800.0) if step is None else float(step)
    h = min(h, N / 4.0)
    probe = np.concatenate([t, np.clip(t - h, 0, N), np.clip(t + h, 0, N),
                            [2 * h, N - 2 * h]])
    S_all, bound_all = survival_fn(probe)
    G = grid_points
    S, S_lo, S_hi = S_all[:G], S_all[G:2 * G], S_all[2 * G:3 * G]
    S_2h, S_N2h = S_all[3 * G], S_all[3 * G + 1]
    dens = (S_lo - S_hi) / (2 * h)
    dens[0] = -(-3 * S[0] + 4 * S_hi[0] - S_2h) / (2 * h)
    dens[-1] = -(3 * S[-1] - 4 * S_lo[-1] + S_N2h) / (2 * h)
    return GapCurve(t, S, dens, bound_all[:G])


def gap_curve(es, params, sched, grid_points=181, tail_eps=DEFAULT_TAIL_EPS,
              prune_eps=DEFAULT_PRUNE_EPS, backend="auto", step=None):
    """Survival, density and tail bound of the gap on a uniform grid over ``[0, N]``.

    The density is ``-dS/dt`` by central differences with step ``step``
    (default: a tenth of the grid spacing, at most ``N / 1800``) and one-sided second-order
    differences at ``t = 0`` and ``t = N``.
    """
    grid_points = check_scalar(grid_points, "grid_points", lower=2, integer=True)

    def fn(ts):
        res = gap_survival_curve(es, params, sched, ts, tail_eps, prune_eps, backend)
        return res.survival, res.bound

    return _difference_density(fn, sched.N, grid_points, step)


def constant_gap_curve(r, N, grid_points=181, step=None):
    """:func:`gap_curve` for the two-state constant-rate chain.

    Uses the closed-form survival with the same differencing, so the two
    curves can be compared row by row; the tail bound is identically zero.
    """
    N = check_scalar(N, "N", lower=0.0, lower_inclusive=False)
    grid_points = check_scalar(grid_points, "grid_points", lower=2, integer=True)

    def fn(ts):
        S = np.atleast_1d(two_state_gap_survival(r, N, ts))
        return S, np.zeros_like(S)

    return _difference_density(fn, N, grid_points, step)


def gap_density_curve(es, params, sched, grid_points=181, tail_eps=DEFAULT_TAIL_EPS,
                      prune_eps=DEFAULT_PRUNE_EPS, backend="auto"):
    """``(t, density)`` rows of the gap density over ``[0, N]``; shape ``(grid_points, 2)``."""
    check_scalar(grid_points, "grid_points", lower=3, integer=True)
    curve = gap_curve(es, params, sched, grid_points, tail_eps, prune_eps, backend)
    return np.column_stack([curve.t, curve.density])


def ushape_slack(r, N):
    """Numeric slack of the two sufficient U-shape conditions.

    Returns ``(lambda2 - lambda1 exp(-(lambda1 + lambda2) N / 2), lambda1 - lambda2)``;
    a condition holds when its slack is ``>= 0``.
    """
    N = check_scalar(N, "N", lower=0.0, lower_inclusive=False)
    l1, l2 = r.lambda1, r.lambda2
    return l2 - np.exp(-(l1 + l2) * N / 2.0) * l1, l1 - l2


def check_ushape(r, N):
    """Truth of the two sufficient conditions for a U-shaped two-state gap density."""
    s1, s2 = ushape_slack(r, N)
    return bool(s1 >= 0), bool(s2 >= 0)


def count_sign_changes(values, tol=0.0):
    """Number of sign changes in the first differences of ``values``.

    Differences with magnitude ``<= tol`` are ignored.
    """
    d = np.diff(np.asarray(values, dtype=float))
    signs = np.sign(d[np.abs(d) > tol])
    return int(np.sum(signs[1:] != signs[:-1]))
