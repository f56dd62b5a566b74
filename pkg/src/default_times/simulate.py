"""Monte Carlo ground truth for the default-time laws.

The factor is simulated with the quadratic-exponential step (or, on
request, full-truncation Euler) plus exponential jumps added at the end of
each step. The chain moves with the exact transition matrix of the generator
frozen at the trapezoid average of the factor over the step, and a bridge
draw catches excursions out of default that start and end inside one step.
Every path draws from its own counter-based random streams keyed by
``(seed, path_index, stream)``, so results do not depend on the number of
worker threads or on how paths are batched.
"""

import logging
import os
from dataclasses import dataclass, field

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # skip the TBB probe, which warns on systems with an old TBB
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from ._validation import check_scalar
from .exceptions import EmptyLawError, InvalidInputError

logger = logging.getLogger(__name__)

STATUS_DEFAULTED = 0
STATUS_CENSORED = 1

_STREAM_DIFFUSION = 1
_STREAM_JUMP_COUNT = 2
_STREAM_JUMP_SIZE = 3
_STREAM_CHAIN = 4
_STREAM_BRIDGE = 5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MAX_JUMPS_PER_STEP = 64


# ---------------------------------------------------------------------------
# counter-based generator


@numba.njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def stream_key(seed, path, stream):
    """64-bit key of one random stream; ``seed``, ``path``, ``stream`` are integers."""
    k = _mix64(np.uint64(seed) + _GOLDEN)
    k = _mix64(k ^ (np.uint64(path) * _GOLDEN + np.uint64(0x632BE59BD9B4E019)))
    return _mix64(k ^ (np.uint64(stream) * _M2))


@numba.njit(cache=True, inline="always")
def counter_uniform(key, counter):
    """Uniform on the open interval (0, 1) at position ``counter`` of stream ``key``."""
    z = _mix64(np.uint64(key) + np.uint64(counter) * _GOLDEN)
    return (np.float64(z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, inline="always")
def _normal(key, step):
    u1 = counter_uniform(key, 2 * step)
    u2 = counter_uniform(key, 2 * step + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@numba.njit(cache=True, inline="always")
def _poisson(key, step, mean):
    u = counter_uniform(key, step)
    p = np.exp(-mean)
    cdf = p
    n = 0
    while u > cdf and n < _MAX_JUMPS_PER_STEP:
        n += 1
        p *= mean / n
        cdf += p
    return n


# ---------------------------------------------------------------------------
# kernels


SCHEMES = ("qe", "euler")
_SCHEME_CODE = {"qe": 0, "euler": 1}
_QE_PSI_CRIT = 1.5


@numba.njit(cache=True, inline="always")
def _jumps(x, lam, gamma, dt, kc, ks, step, jump_counter):
    if lam != 0.0:
        n = _poisson(kc, step, lam * dt)
        for _ in range(n):
            x += -gamma * np.log(counter_uniform(ks, jump_counter))
            jump_counter += 1
    return x, jump_counter


@numba.njit(cache=True, inline="always")
def _factor_step(x, dt, scheme, kappa, theta, sigma, decay, kd, step):
    """Diffusive part of one step; ``decay`` is ``exp(-kappa*dt)``."""
    if scheme == 1:
        xp = x if x > 0.0 else 0.0
        x_new = x + kappa * (theta - xp) * dt
        if sigma != 0.0:
            x_new += sigma * np.sqrt(xp * dt) * _normal(kd, step)
        return x_new
    # quadratic-exponential step; matches the conditional mean and variance
    m = theta + (x - theta) * decay
    if sigma == 0.0:
        return m
    one_m = 1.0 - decay
    s2 = sigma * sigma * one_m * (x * decay + 0.5 * theta * one_m) / kappa
    psi = s2 / (m * m)
    if psi <= _QE_PSI_CRIT:
        inv = 2.0 / psi
        b2 = inv - 1.0 + np.sqrt(inv) * np.sqrt(inv - 1.0)
        a = m / (1.0 + b2)
        z = np.sqrt(b2) + _normal(kd, step)
        return a * z * z
    p = (psi - 1.0) / (psi + 1.0)
    u = counter_uniform(kd, 2 * step)
    if u <= p:
        return 0.0
    return np.log((1.0 - p) / (1.0 - u)) * m / (1.0 - p)


@numba.njit(cache=True, inline="always")
def _chain_step(state, xbar, dt, B, Binv, mu, u, u_bridge):
    """Advance the chain one step under the generator frozen at ``xbar``.

    Returns the new state and whether the step may have left the default
    state and come back: when the chain sits in default at both ends, the
    holding-time law tells how likely it stayed there throughout.
    """
    K = B.shape[0]
    e = np.empty(K)
    for l in range(K):
        e[l] = np.exp(mu[l] * xbar * dt)
    cdf = 0.0
    new = state
    found = False
    p_last = 0.0
    for j in range(K):
        pj = 0.0
        for l in range(K):
            pj += B[state, l] * e[l] * Binv[l, j]
        cdf += pj
        p_last = pj
        if not found and u < cdf:
            new = j
            found = True
    if not found:
        new = K - 1
    touched = new != K - 1
    if state == K - 1 and new == K - 1:
        a_kk = 0.0
        for l in range(K):
            a_kk += B[K - 1, l] * mu[l] * Binv[l, K - 1]
        stay = np.exp(a_kk * xbar * dt) / p_last if p_last > 0.0 else 1.0
        touched = u_bridge >= stay
    return new, touched


@numba.njit(cache=True, parallel=True)
def _factor_kernel(seed, path_offset, n_paths, n_steps, dt, scheme, kappa, theta, sigma,
                   lam, gamma, x0, out):
    decay = np.exp(-kappa * dt)
    for p in numba.prange(n_paths):
        path = path_offset + p
        kd = stream_key(seed, path, _STREAM_DIFFUSION)
        kc = stream_key(seed, path, _STREAM_JUMP_COUNT)
        ks = stream_key(seed, path, _STREAM_JUMP_SIZE)
        x = x0
        jumps = 0
        out[p, 0] = x0
        for step in range(n_steps):
            x = _factor_step(x, dt, scheme, kappa, theta, sigma, decay, kd, step)
            x, jumps = _jumps(x, lam, gamma, dt, kc, ks, step, jumps)
            out[p, step + 1] = x if x > 0.0 else 0.0


@numba.njit(cache=True, parallel=True)
def _chain_kernel(seed, path_offset, xpaths, dt, steps_per_period, n_periods, B, Binv, mu,
                  s0, out_tau_e, out_tau_r, out_status):
    K = B.shape[0]
    n_paths = xpaths.shape[0]
    for p in numba.prange(n_paths):
        kch = stream_key(seed, path_offset + p, _STREAM_CHAIN)
        kbr = stream_key(seed, path_offset + p, _STREAM_BRIDGE)
        state = s0
        last_ok = 0.0
        out_status[p] = STATUS_CENSORED
        out_tau_e[p] = np.nan
        out_tau_r[p] = np.nan
        for period in range(n_periods):
            for k in range(steps_per_period):
                step = period * steps_per_period + k
                xbar = 0.5 * (xpaths[p, step] + xpaths[p, step + 1])
                was = state
                state, touched = _chain_step(state, xbar, dt, B, Binv, mu,
                                             counter_uniform(kch, step),
                                             counter_uniform(kbr, step))
                if touched or was != K - 1:
                    last_ok = step * dt
            if state == K - 1:
                out_tau_r[p] = (period + 1) * steps_per_period * dt
                out_tau_e[p] = last_ok + 0.5 * dt
                out_status[p] = STATUS_DEFAULTED
                break


@numba.njit(cache=True, parallel=True)
def _joint_kernel(seed, path_offset, n_paths, dt, steps_per_period, n_periods, scheme, kappa,
                  theta, sigma, lam, gamma, x0, B, Binv, mu, s0, out_tau_e, out_tau_r,
                  out_status):
    K = B.shape[0]
    decay = np.exp(-kappa * dt)
    for p in numba.prange(n_paths):
        path = path_offset + p
        kd = stream_key(seed, path, _STREAM_DIFFUSION)
        kc = stream_key(seed, path, _STREAM_JUMP_COUNT)
        ks = stream_key(seed, path, _STREAM_JUMP_SIZE)
        kch = stream_key(seed, path, _STREAM_CHAIN)
        kbr = stream_key(seed, path, _STREAM_BRIDGE)
        x = x0
        xp = x0
        jumps = 0
        state = s0
        last_ok = 0.0
        out_status[p] = STATUS_CENSORED
        out_tau_e[p] = np.nan
        out_tau_r[p] = np.nan
        for period in range(n_periods):
            for k in range(steps_per_period):
                step = period * steps_per_period + k
                x = _factor_step(x, dt, scheme, kappa, theta, sigma, decay, kd, step)
                x, jumps = _jumps(x, lam, gamma, dt, kc, ks, step, jumps)
                xn = x if x > 0.0 else 0.0
                was = state
                state, touched = _chain_step(state, 0.5 * (xp + xn), dt, B, Binv, mu,
                                             counter_uniform(kch, step),
                                             counter_uniform(kbr, step))
                if touched or was != K - 1:
                    last_ok = step * dt
                xp = xn
            if state == K - 1:
                out_tau_r[p] = (period + 1) * steps_per_period * dt
                out_tau_e[p] = last_ok + 0.5 * dt
                out_status[p] = STATUS_DEFAULTED
                break


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    Parameters
    ----------
    n_paths : int
    dt : float
        Step of the factor grid; rounded down so that ``N / dt`` is an integer.
    seed : int
        Non-negative 64-bit seed.
    horizon : int
        Number of payment periods simulated before a path is censored.
    threads : int or None
        Worker threads; results are identical for every value.
    scheme : {"qe", "euler"}
        Factor discretization. ``"euler"`` is full-truncation Euler;
        ``"qe"`` is the quadratic-exponential step, whose conditional mean
        and variance are exact and which stays accurate when the diffusion
        spends long stretches near zero.
    """

    n_paths: int
    dt: float
    seed: int = 0
    horizon: int = 50
    threads: int = None
    scheme: str = "qe"

    def __post_init__(self):
        check_scalar(self.n_paths, "n_paths", lower=1, integer=True)
        check_scalar(self.dt, "dt", lower=0.0, lower_inclusive=False)
        check_scalar(self.seed, "seed", lower=0, upper=2 ** 64 - 1, integer=True)
        check_scalar(self.horizon, "horizon", lower=1, integer=True)
        if self.threads is not None:
            check_scalar(self.threads, "threads", lower=1, integer=True)
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def steps_per_period(self, N):
        if self.dt > N / 10.0 * (1 + 1e-12):
            raise InvalidInputError(f"dt={self.dt:g} must not exceed N/10={N / 10.0:g}")
        return int(np.ceil(N / self.dt - 1e-9))

    def effective_dt(self, N):
        return N / self.steps_per_period(N)


def _threads(cfg):
    n = cfg.threads
    if n is None:
        env = os.environ.get("DEFAULT_TIMES_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    return max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))


def _factor_args(p):
    return p.kappa, p.theta, p.sigma, p.lambda_J, p.gamma, p.x0


def simulate_factor(params, cfg, t_end, path_offset=0):
    """Factor paths on the grid ``0, dt, ..., t_end``, floored at zero.

    Returns
    -------
    ndarray of shape (cfg.n_paths, n_steps + 1)
    """
    t_end = check_scalar(t_end, "t_end", lower=0.0, lower_inclusive=False)
    n_steps = int(round(t_end / cfg.dt))
    out = np.empty((cfg.n_paths, n_steps + 1))
    numba.set_num_threads(_threads(cfg))
    _factor_kernel(np.uint64(cfg.seed), path_offset, cfg.n_paths, n_steps, float(cfg.dt),
                   _SCHEME_CODE[cfg.scheme], *_factor_args(params), out)
    return out


@dataclass
class SimResult:
    tau_e: np.ndarray
    tau_r: np.ndarray
    censored: np.ndarray
    N: float
    dt: float

    @property
    def n_paths(self):
        return len(self.tau_e)


def _check_chain_inputs(es, s0):
    s0 = check_scalar(s0, "s0", lower=1, integer=True)
    if s0 >= es.K:
        raise InvalidInputError("the firm must start outside the default state")
    return s0 - 1


def simulate_chain(es, xpath, sched, cfg, s0=1, path_offset=0):
    """Default times along given factor paths.

    ``xpath`` has one row per path on the grid of spacing ``cfg.dt`` and must
    cover ``cfg.horizon`` payment periods; it is read as already floored.
    Each step uses the generator frozen at the trapezoid average of the two
    grid values, so ``simulate_chain(simulate_factor(...))`` reproduces
    :func:`simulate_default_times` path by path under the same seed.
    """
    state0 = _check_chain_inputs(es, s0)
    xpaths = np.atleast_2d(np.asarray(xpath, dtype=float))
    spp = cfg.steps_per_period(sched.N)
    dt = sched.N / spp
    if not np.isclose(dt, cfg.dt, rtol=1e-9):
        raise InvalidInputError("N must be an integer multiple of dt for simulate_chain")
    if xpaths.shape[1] < spp * cfg.horizon + 1:
        raise InvalidInputError("xpath does not cover the simulation horizon")
    n = xpaths.shape[0]
    tau_e, tau_r = np.empty(n), np.empty(n)
    status = np.empty(n, dtype=np.int8)
    numba.set_num_threads(_threads(cfg))
    _chain_kernel(np.uint64(cfg.seed), path_offset, np.ascontiguousarray(xpaths), dt, spp,
                  cfg.horizon,
                  np.ascontiguousarray(es.B), np.ascontiguousarray(es.B_inv),
                  np.ascontiguousarray(es.mu), state0, tau_e, tau_r, status)
    return SimResult(tau_e, tau_r, status == STATUS_CENSORED, sched.N, dt)


def simulate_default_times(es, params, sched, cfg, s0=1):
    """Simulate factor and chain jointly without storing the factor paths."""
    state0 = _check_chain_inputs(es, s0)
    spp = cfg.steps_per_period(sched.N)
    dt = sched.N / spp
    n = cfg.n_paths
    tau_e, tau_r = np.empty(n), np.empty(n)
    status = np.empty(n, dtype=np.int8)
    numba.set_num_threads(_threads(cfg))
    _joint_kernel(np.uint64(cfg.seed), 0, n, dt, spp, cfg.horizon, _SCHEME_CODE[cfg.scheme],
                  *_factor_args(params),
                  np.ascontiguousarray(es.B), np.ascontiguousarray(es.B_inv),
                  np.ascontiguousarray(es.mu), state0, tau_e, tau_r, status)
    return SimResult(tau_e, tau_r, status == STATUS_CENSORED, sched.N, dt)


@dataclass
class EmpiricalLaw:
    """Aggregated gap statistics of a simulation.

    ``frequency`` and ``std_err`` are conditional on not being censored;
    ``n_censored`` is always reported alongside.
    """

    edges: np.ndarray
    counts: np.ndarray
    gap_samples: np.ndarray = field(repr=False)
    recorded_counts: np.ndarray
    n_paths: int
    n_censored: int

    @property
    def n_observed(self):
        return self.n_paths - self.n_censored

    @property
    def frequency(self):
        return self.counts / self.n_observed

    @property
    def std_err(self):
        f = self.frequency
        return np.sqrt(f * (1.0 - f) / self.n_observed)

    @property
    def censored_fraction(self):
        return self.n_censored / self.n_paths

    def survival(self, t):
        """Empirical ``P(gap > t)`` and its binomial standard error."""
        p = float(np.mean(self.gap_samples > t))
        return p, float(np.sqrt(p * (1.0 - p) / self.n_observed))

    def ks_distance(self, cdf):
        """Kolmogorov-Smirnov distance between the gap samples and ``cdf``."""
        x = np.sort(self.gap_samples)
        n = x.size
        F = np.asarray(cdf(x), dtype=float)
        upper = np.arange(1, n + 1) / n - F
        lower = F - np.arange(0, n) / n
        return float(max(upper.max(), lower.max()))

    def rows(self):
        f, se = self.frequency, self.std_err
        return [(self.edges[k], self.edges[k + 1], int(self.counts[k]), f[k], se[k])
                for k in range(len(self.counts))]


def empirical_gap_law(result, bins=10):
    """Histogram the gaps of a :class:`SimResult` over ``bins`` equal bins of ``[0, N]``.

    Bins are right-closed, ``(t_{k-1}, t_k]``, matching the bundled data.

    Raises
    ------
    EmptyLawError
        If every path was censored.
    """
    bins = check_scalar(bins, "bins", lower=1, integer=True)
    ok = ~result.censored
    if not ok.any():
        raise EmptyLawError("all simulated paths were censored")
    gaps = (result.tau_r - result.tau_e)[ok]
    edges = np.linspace(0.0, result.N, bins + 1)
    idx = np.clip(np.searchsorted(edges, gaps, side="left") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    periods = np.rint(result.tau_r[ok] / result.N).astype(int)
    recorded = np.bincount(periods, minlength=periods.max() + 1)[1:]
    return EmpiricalLaw(edges, counts, gaps, recorded, result.n_paths,
                        int(result.censored.sum()))
