"""Calibration against binned gap data.

Two fitting routes are provided: maximum likelihood of the two-state
constant-rate model, whose bin probabilities are available in closed form,
and a mean-squared-error grid search over ``(kappa, sigma, gamma)`` for the
affine stochastic-rate model. Both are also wrapped as scikit-learn
estimators (:class:`TwoStateGapModel`, :class:`AffineGapGridSearch`).
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid, check_scalar
from .affine import AffineParams
from .exceptions import (DefaultTimesError, InvalidInputError, TransformDivergenceError,
                         TruncationError, UnsupportedParameterError)
from .law import DEFAULT_PRUNE_EPS, DEFAULT_TAIL_EPS, EigenStructure, gap_survival_curve
from .markov import PaymentSchedule, TwoStateRates

logger = logging.getLogger(__name__)

# values reported for the bundled histogram
REFERENCE_RATES = (0.3631, 0.0238)
UNIT_HYPOTHESES = ("day", "bin", "period")

_LOG_BOUNDS = (-20.0, 10.0)
_MAX_EVALS = 100_000
_SCAN_POINTS = 31


class DataFormatError(InvalidInputError):
    """A histogram file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending row.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class GapHistogram:
    """Counts of observed gaps on equal bins ``(t_{i-1}, t_i]`` covering ``[0, N]``.

    Parameters
    ----------
    edges : array-like of shape (M + 1,)
        ``0 = t_0 < t_1 < ... < t_M = N`` with constant spacing.
    counts : array-like of shape (M,)
        Non-negative (possibly fractional) counts with a positive total.
    """

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise InvalidInputError("edges must be a 1-d array with at least two entries")
        if counts.shape != (edges.size - 1,):
            raise InvalidInputError(
                f"expected {edges.size - 1} counts for {edges.size} edges, got {counts.size}")
        if not (np.all(np.isfinite(edges)) and np.all(np.isfinite(counts))):
            raise InvalidInputError("edges and counts must be finite")
        if edges[0] != 0.0:
            raise InvalidInputError("the first bin must start at 0")
        widths = np.diff(edges)
        if np.any(widths <= 0):
            raise InvalidInputError("edges must be strictly increasing")
        if not np.allclose(widths, widths[0], rtol=1e-9, atol=0.0):
            raise InvalidInputError("bins must have equal width")
        if np.any(counts < 0):
            raise InvalidInputError("counts must be >= 0")
        if counts.sum() <= 0:
            raise InvalidInputError("counts must have a positive total")
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def N(self):
        return float(self.edges[-1])

    @property
    def delta(self):
        return float(self.edges[1] - self.edges[0])

    @property
    def n_bins(self):
        return self.counts.size

    @property
    def total(self):
        return float(self.counts.sum())

    @property
    def frequencies(self):
        return self.counts / self.total

    @classmethod
    def uniform(cls, delta, counts):
        counts = np.asarray(counts, dtype=float)
        return cls(delta * np.arange(counts.size + 1), counts)

    def rescaled(self, scale):
        """Same counts with the time axis divided by ``scale``."""
        return GapHistogram(self.edges / scale, self.counts)

    @classmethod
    def from_csv(cls, source):
        """Read ``bin_left,bin_right,count`` rows from a path or an open text file."""
        if hasattr(source, "read"):
            return cls._parse(source)
        with open(source, newline="") as fh:
            return cls._parse(fh)

    @classmethod
    def _parse(cls, fh):
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("empty file", line=1)
        if [h.strip() for h in header] != ["bin_left", "bin_right", "count"]:
            raise DataFormatError("header must be bin_left,bin_right,count", line=1)
        left, right, counts = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataFormatError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                a, b, c = (float(x) for x in row)
            except ValueError:
                raise DataFormatError(f"non-numeric field in {row!r}", line=lineno) from None
            if right and a != right[-1]:
                raise DataFormatError("bins must be contiguous", line=lineno)
            left.append(a)
            right.append(b)
            counts.append(c)
        if not counts:
            raise DataFormatError("no data rows", line=2)
        try:
            return cls(np.array(left[:1] + right), np.array(counts))
        except InvalidInputError as exc:
            raise DataFormatError(str(exc)) from None

    def to_csv(self, target=None):
        """Write the histogram as CSV; returns the text when ``target`` is None."""
        buf = io.StringIO()
        buf.write("bin_left,bin_right,count\n")
        for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            buf.write(f"{a:.12g},{b:.12g},{c:.12g}\n")
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w", newline="") as fh:
            fh.write(text)
        return None


def load_table1():
    """The bundled histogram of 73 observed gaps, 18-day bins over 180 days."""
    ref = resources.files("default_times") / "data" / "table1.csv"
    with ref.open("r", newline="") as fh:
        return GapHistogram.from_csv(fh)


def _as_histogram(X):
    if isinstance(X, GapHistogram):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError("X must be a GapHistogram or an array of "
                                "(bin_left, bin_right, count) rows")
    return GapHistogram(np.append(arr[:1, 0], arr[:, 1]), arr[:, 2])


# ---------------------------------------------------------------------------
# two-state likelihood


def two_state_bin_probabilities(r, edges):
    """Bin masses ``S(t_{i-1}) - S(t_i)`` of the two-state gap law.

    Each mass is formed as a sum of two non-negative terms, so no
    cancellation occurs even when one rate is large.
    """
    edges = np.asarray(edges, dtype=float)
    N = edges[-1]
    a, b = edges[:-1], edges[1:]
    l1, l2 = r.lambda1, r.lambda2
    width = b - a
    first = np.exp(-l2 * a) * -np.expm1(-l2 * width)
    second = np.exp(-l2 * N - l1 * (N - b)) * -np.expm1(-l1 * width)
    return (first + second) / -np.expm1(-(l1 + l2) * N)


def _log_masses(l1, l2, edges):
    """Logs of the two non-negative terms of each bin mass and of the normaliser."""
    N = edges[-1]
    a, b = edges[:-1], edges[1:]
    with np.errstate(divide="ignore", over="ignore"):
        log_first = -l2 * a + np.log(-np.expm1(-l2 * (b - a)))
        log_second = -l2 * N - l1 * (N - b) + np.log(-np.expm1(-l1 * (b - a)))
        log_den = math.log(-math.expm1(-(l1 + l2) * N))
    return np.logaddexp(log_first, log_second), log_den


def loglik_two_state(r, h):
    """Log-likelihood of binned gaps under the two-state constant-rate model.

    Masses are combined in the log domain, so the value stays finite far from
    the optimum. Returns ``-inf`` when a bin with a positive count has zero
    probability at the queried rates (outside the feasible region). Bins with
    a zero count do not contribute.
    """
    counts = h.counts
    log_num, log_den = _log_masses(r.lambda1, r.lambda2, h.edges)
    used = counts > 0
    lp = log_num[used]
    if not np.isfinite(log_den) or not np.all(np.isfinite(lp)):
        return -math.inf
    return float(np.sum(counts[used] * lp) - counts.sum() * log_den)


def loglik_gradient(r, h):
    """Analytic ``(dL/dlambda1, dL/dlambda2)`` of :func:`loglik_two_state`."""
    l1, l2 = r.lambda1, r.lambda2
    edges, counts = h.edges, h.counts
    N = edges[-1]
    log_num, _ = _log_masses(l1, l2, edges)
    used = counts > 0
    a, b, ln = edges[:-1][used], edges[1:][used], log_num[used]
    # each exponential divided by the bin mass, formed in the log domain
    ea = np.exp(-l2 * a - ln)
    eb = np.exp(-l2 * b - ln)
    fa = np.exp(-l2 * N - l1 * (N - a) - ln)
    fb = np.exp(-l2 * N - l1 * (N - b) - ln)
    d1 = -(N - b) * fb + (N - a) * fa
    d2 = -a * ea + b * eb - N * fb + N * fa
    with np.errstate(over="ignore"):
        dden = N / math.expm1((l1 + l2) * N) if (l1 + l2) * N < 700 else 0.0
    c = counts[used]
    total = counts.sum()
    return np.array([np.sum(c * d1) - total * dden, np.sum(c * d2) - total * dden])


def stationarity_residuals(r, h, step=1e-6):
    """Central finite-difference partial derivatives of the log-likelihood.

    The step shrinks to half the rate for rates below ``2 * step``, so the
    lower point stays positive.
    """
    out = []
    for k in range(2):
        lam = [r.lambda1, r.lambda2]
        hk = min(step, 0.5 * lam[k]) if lam[k] > 0 else step
        hi, lo = list(lam), list(lam)
        hi[k] += hk
        lo[k] = max(lo[k] - hk, 0.0)
        out.append((loglik_two_state(TwoStateRates(*hi), h)
                    - loglik_two_state(TwoStateRates(*lo), h)) / (hi[k] - lo[k]))
    return np.array(out)


@dataclass
class MleResult:
    """Outcome of :func:`fit_mle`.

    ``converged`` is False when the optimizer stopped on its budget or when
    the likelihood keeps increasing towards the edge of the parameter space
    (the supremum is not attained at finite positive rates).
    """

    lambda1: float
    lambda2: float
    loglik: float
    converged: bool
    iterations: int
    evaluations: int = 0
    unit: str = "day"
    gradient: np.ndarray = field(default=None, repr=False)
    message: str = ""

    @property
    def rates(self):
        return TwoStateRates(self.lambda1, self.lambda2)


def _roundoff(h, r):
    """Size of floating-point noise in the log-likelihood at ``r``."""
    log_num, log_den = _log_masses(r.lambda1, r.lambda2, h.edges)
    used = h.counts > 0
    mag = np.sum(h.counts[used] * np.abs(log_num[used])) + h.total * abs(log_den)
    return 1e-13 * max(mag, 1.0)


def _boundary_escape(l1, l2, h, L):
    """Directions (by name) along which the likelihood does not decrease."""
    tol = _roundoff(h, TwoStateRates(l1, l2))
    esc = []
    for name, f1, f2 in (("lambda1 -> inf", 10.0, 1.0), ("lambda1 -> 0", 0.1, 1.0),
                         ("lambda2 -> inf", 1.0, 10.0), ("lambda2 -> 0", 1.0, 0.1)):
        other = loglik_two_state(TwoStateRates(l1 * f1, l2 * f2), h)
        if other >= L - tol:
            esc.append(name)
    return esc


def _nelder_mead(objective, start, bounds, xatol, max_evals):
    start = np.asarray(start, dtype=float)
    lo, hi = np.array(bounds).T
    # explicit simplex: scipy's default degenerates when a coordinate is 0
    simplex = np.clip(np.array([start, start + [0.5, 0.0], start + [0.0, 0.5]]), lo, hi)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return minimize(objective, start, method="Nelder-Mead", bounds=bounds,
                        options={"xatol": xatol, "fatol": 0.0, "maxfev": max_evals,
                                 "maxiter": max_evals, "initial_simplex": simplex})


def _newton_polish(l1, l2, h, max_iter=60):
    """Damped Newton steps on the analytic gradient in ``(exp(-delta l1), log l2)``.

    The Hessian is a difference quotient of the analytic gradient. Steps that
    lower the likelihood beyond round-off, or leave the domain, stop the
    iteration.
    """
    delta = h.delta

    def to_rates(y):
        return -math.log(y[0]) / delta, math.exp(y[1])

    def grad(y):
        a, b = to_rates(y)
        g = loglik_gradient(TwoStateRates(a, b), h)
        return np.array([-g[0] / (delta * y[0]), g[1] * b])

    def value(y):
        return loglik_two_state(TwoStateRates(*to_rates(y)), h)

    y = np.array([math.exp(-delta * l1), math.log(l2)])
    if not 0.0 < y[0] < 1.0:
        return l1, l2
    L = value(y)
    for _ in range(max_iter):
        g = grad(y)
        H = np.empty((2, 2))
        for k in range(2):
            step = 1e-5 * (min(y[0], 1.0 - y[0]) if k == 0 else 1.0)
            e = np.zeros(2)
            e[k] = step
            if k == 0 and step < 1e-12:
                # u pinned to 0 or 1 leaves no room for a difference quotient
                H[:] = np.nan
                break
            H[:, k] = (grad(y + e) - grad(y - e)) / (2 * step)
        H = 0.5 * (H + H.T)
        if not np.all(np.isfinite(H)) or not np.all(np.linalg.eigvalsh(H) < 0):
            break
        d = -np.linalg.solve(H, g)
        tol = _roundoff(h, TwoStateRates(*to_rates(y)))
        for _ in range(30):
            y_new = y + d
            if 0.0 < y_new[0] < 1.0 and abs(y_new[1]) < 50:
                L_new = value(y_new)
                if np.isfinite(L_new) and L_new >= L - tol:
                    break
            d = d / 2
        else:
            break
        done = abs(d[0]) <= 1e-14 * max(y[0], 1e-300) + 1e-300 and abs(d[1]) <= 1e-14
        y, L = y_new, L_new
        if done:
            break
    return to_rates(y)


def _scan_start(objective):
    """Best point of a coarse grid over the log box.

    The likelihood has long flat ridges (for large ``lambda1`` it depends on
    ``lambda1`` only through ``exp(-delta lambda1)``), and a direct search
    started on one of them can stop far below the optimum.
    """
    axis = np.linspace(*_LOG_BOUNDS, _SCAN_POINTS)
    values = np.array([[objective(np.array([a, b])) for b in axis] for a in axis])
    i, j = np.unravel_index(np.argmin(values), values.shape)
    return np.array([axis[i], axis[j]])


def fit_mle(h, init=None, unit="day", max_evals=_MAX_EVALS):
    """Maximum-likelihood rates of the two-state constant-rate model.

    Direct search (Nelder-Mead) on ``(log lambda1, log lambda2)``, started
    from ``init`` and from the best point of a coarse log-grid scan and
    stopped when the simplex shrinks below 1e-8 in log-space. The better of
    the two runs is refined by Newton steps on the
    analytic gradient in ``(exp(-delta lambda1), log lambda2)``. The bin
    masses depend on ``lambda1`` almost only through ``exp(-delta lambda1)``,
    so for large ``lambda1`` the log coordinate leaves the likelihood too flat
    for the direct search to locate the optimum precisely.

    Parameters
    ----------
    h : GapHistogram
        Edges are read in days.
    init : TwoStateRates, optional
        Starting point, in the rate unit of ``unit``; defaults to ``(1, 0.1)``.
    unit : {"day", "bin", "period"}
        Time unit under which the rates are fitted and reported: per day, per
        bin width, or per payment period ``N``.
    max_evals : int
        Likelihood evaluations allowed to the direct search.
    """
    if unit not in UNIT_HYPOTHESES:
        raise InvalidInputError(f"unit must be one of {UNIT_HYPOTHESES}, got {unit!r}")
    scale = {"day": 1.0, "bin": h.delta, "period": h.N}[unit]
    hs = h.rescaled(scale)
    init = TwoStateRates(1.0, 0.1) if init is None else init
    if init.lambda2 <= 0:
        raise InvalidInputError("initial lambda2 must be > 0")
    check_scalar(max_evals, "max_evals", lower=1, integer=True)

    def objective(z):
        L = loglik_two_state(TwoStateRates(*np.exp(z)), hs)
        return -L if np.isfinite(L) else 1e300

    z0 = np.clip(np.log([init.lambda1, init.lambda2]), *_LOG_BOUNDS)
    runs = [_nelder_mead(objective, z, [_LOG_BOUNDS] * 2, 1e-8, max_evals)
            for z in (z0, _scan_start(objective))]
    # the first run wins ties, so a good caller start is kept
    res = min(runs, key=lambda r: r.fun)
    l1, l2 = (float(v) for v in np.exp(res.x))
    L = -float(res.fun)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        p1, p2 = _newton_polish(l1, l2, hs)
        Lp = loglik_two_state(TwoStateRates(p1, p2), hs)
    if np.isfinite(Lp) and Lp >= L:
        l1, l2, L = float(p1), float(p2), Lp
    escape = _boundary_escape(l1, l2, hs, L)
    at_box = np.any(np.abs(np.log([l1, l2]) - np.array(_LOG_BOUNDS)[:, None]) < 1e-3)
    converged = bool(res.success and not escape and not at_box and np.isfinite(L))
    msg = res.message if isinstance(res.message, str) else str(res.message)
    if escape:
        msg = "likelihood increases towards the boundary: " + ", ".join(escape)
    return MleResult(l1, l2, L, converged, sum(int(r.nit) for r in runs),
                     sum(int(r.nfev) for r in runs) + _SCAN_POINTS ** 2, unit,
                     loglik_gradient(TwoStateRates(l1, l2), hs), msg)


@dataclass
class UnitReport:
    """MLE under every unit hypothesis and which of them matches ``target``."""

    results: dict
    target: tuple
    tol: float

    @property
    def matches(self):
        return [u for u, r in self.results.items() if self._match(r)]

    def _match(self, r):
        return (r.converged and abs(r.lambda1 - self.target[0]) <= self.tol
                and abs(r.lambda2 - self.target[1]) <= self.tol)

    @property
    def best(self):
        """Matching result if any, else the hypothesis whose fit lands closest to ``target``."""
        if self.matches:
            return self.results[self.matches[0]]
        return min(self.results.values(),
                   key=lambda r: max(abs(r.lambda1 - self.target[0]),
                                     abs(r.lambda2 - self.target[1])))


def detect_units(h, target=REFERENCE_RATES, tol=1e-3, init=None):
    """Fit under each unit hypothesis and report which reproduces ``target``."""
    results = {u: fit_mle(h, init=init, unit=u) for u in UNIT_HYPOTHESES}
    report = UnitReport(results, tuple(target), tol)
    if not report.matches:
        logger.info("no unit hypothesis reproduces %s: %s", target,
                    {u: (r.lambda1, r.lambda2, r.converged) for u, r in results.items()})
    return report


# ---------------------------------------------------------------------------
# grid search for the affine model


@dataclass(frozen=True)
class AffineBase:
    """The parts of the affine model held fixed during the grid search."""

    es: EigenStructure
    theta: float
    lambda_J: float
    x0: float
    N: float
    i_max: int = 25

    def params(self, kappa, sigma, gamma):
        return AffineParams(kappa, self.theta, sigma, self.lambda_J, gamma, self.x0)

    def schedule(self):
        return PaymentSchedule(self.N, self.i_max)


def affine_bin_probabilities(base, params, edges, tail_eps=DEFAULT_TAIL_EPS,
                             prune_eps=DEFAULT_PRUNE_EPS):
    """Bin masses of the gap under the affine model, from survival differences."""
    res = gap_survival_curve(base.es, params, base.schedule(), edges, tail_eps, prune_eps)
    return -np.diff(res.survival)


@dataclass
class GridFitResult:
    """Outcome of :func:`fit_grid`.

    ``table`` holds one ``(kappa, sigma, gamma, mse)`` row per evaluated grid
    point, in lexicographic order; skipped points are listed in ``skipped``.
    """

    kappa: float
    sigma: float
    gamma: float
    mse: float
    kappa_grid: np.ndarray
    sigma_grid: np.ndarray
    gamma_grid: np.ndarray
    table: np.ndarray = field(repr=False)
    skipped: list = field(default_factory=list, repr=False)


def _histogram_mse(probs, h):
    return float(np.mean((probs - h.frequencies) ** 2))


def fit_grid(h, base, kappa_grid, sigma_grid, gamma_grid, tail_eps=DEFAULT_TAIL_EPS,
             prune_eps=DEFAULT_PRUNE_EPS):
    """Grid search of ``(kappa, sigma, gamma)`` minimising the bin-probability MSE.

    Grid points are visited in lexicographic order and a later point replaces
    the incumbent only when strictly better, so ties go to the
    lexicographically smallest triple. Points where the transform diverges or
    the tail cannot be truncated are skipped and logged.
    """
    if not math.isclose(h.N, base.N, rel_tol=1e-12):
        raise InvalidInputError(f"histogram covers [0, {h.N:g}] but N = {base.N:g}")
    kg = check_grid(kappa_grid, "kappa_grid")
    sg = check_grid(sigma_grid, "sigma_grid", lower_inclusive=True)
    gg = check_grid(gamma_grid, "gamma_grid", lower_inclusive=True)
    rows, skipped = [], []
    best = None
    for kappa in kg:
        for sigma in sg:
            for gamma in gg:
                try:
                    p = base.params(kappa, sigma, gamma)
                    probs = affine_bin_probabilities(base, p, h.edges, tail_eps, prune_eps)
                except (TransformDivergenceError, TruncationError,
                        UnsupportedParameterError) as exc:
                    logger.warning("grid point kappa=%g sigma=%g gamma=%g skipped: %s",
                                   kappa, sigma, gamma, exc)
                    skipped.append((kappa, sigma, gamma, str(exc)))
                    continue
                mse = _histogram_mse(probs, h)
                rows.append((kappa, sigma, gamma, mse))
                if best is None or mse < best[3]:
                    best = (kappa, sigma, gamma, mse)
    if best is None:
        raise DefaultTimesError("every grid point was skipped")
    return GridFitResult(*(float(v) for v in best), kg, sg, gg, np.array(rows), skipped)


# ---------------------------------------------------------------------------
# estimators


class TwoStateGapModel(BaseEstimator):
    """Two-state constant-rate gap model fitted by maximum likelihood.

    Parameters
    ----------
    init_lambda1, init_lambda2 : float
        Starting rates for the direct search.
    unit : {"day", "bin", "period"}
        Unit of the fitted rates, see :func:`fit_mle`.

    Attributes
    ----------
    lambda1_, lambda2_ : float
        Fitted rates (per ``unit``).
    loglik_ : float
    converged_ : bool
    n_iter_ : int
    """

    def __init__(self, init_lambda1=1.0, init_lambda2=0.1, unit="day"):
        self.init_lambda1 = init_lambda1
        self.init_lambda2 = init_lambda2
        self.unit = unit

    def fit(self, X, y=None):
        """Fit on a :class:`GapHistogram` or ``(bin_left, bin_right, count)`` rows."""
        h = _as_histogram(X)
        res = fit_mle(h, TwoStateRates(self.init_lambda1, self.init_lambda2), self.unit)
        self.result_ = res
        self.lambda1_, self.lambda2_ = res.lambda1, res.lambda2
        self.loglik_ = res.loglik
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        self.scale_ = {"day": 1.0, "bin": h.delta, "period": h.N}[self.unit]
        return self

    def predict_proba(self, X):
        """Model probability of each bin of ``X``."""
        check_is_fitted(self, "lambda1_")
        h = _as_histogram(X)
        return two_state_bin_probabilities(TwoStateRates(self.lambda1_, self.lambda2_),
                                           h.edges / self.scale_)

    def score(self, X, y=None):
        """Average log-likelihood per observed gap."""
        check_is_fitted(self, "lambda1_")
        h = _as_histogram(X)
        L = loglik_two_state(TwoStateRates(self.lambda1_, self.lambda2_),
                             h.rescaled(self.scale_))
        return L / h.total


class AffineGapGridSearch(BaseEstimator):
    """Grid-search fit of ``(kappa, sigma, gamma)`` for the affine gap model.

    Parameters
    ----------
    B : array-like of shape (2, 2)
        Eigenvector matrix of the generator.
    mu : array-like of shape (2,)
        Eigenvalue multipliers; the last must be 0.
    theta, lambda_J, x0 : float
        Fixed parts of the factor dynamics.
    kappa_grid, sigma_grid, gamma_grid : sequence of float
        Values searched; sigma and gamma may include 0.
    tail_eps, prune_eps : float
        Truncation controls passed to the gap law.

    Attributes
    ----------
    kappa_, sigma_, gamma_ : float
        Selected grid values.
    mse_ : float
    result_ : GridFitResult
    """

    def __init__(self, B, mu, theta=1.0, lambda_J=0.2, x0=1.0, kappa_grid=(1.0,),
                 sigma_grid=(1.0,), gamma_grid=(1.0,), tail_eps=DEFAULT_TAIL_EPS,
                 prune_eps=DEFAULT_PRUNE_EPS):
        self.B = B
        self.mu = mu
        self.theta = theta
        self.lambda_J = lambda_J
        self.x0 = x0
        self.kappa_grid = kappa_grid
        self.sigma_grid = sigma_grid
        self.gamma_grid = gamma_grid
        self.tail_eps = tail_eps
        self.prune_eps = prune_eps

    def _base(self, N):
        es = EigenStructure.from_matrix(self.B, self.mu)
        return AffineBase(es, self.theta, self.lambda_J, self.x0, N)

    def fit(self, X, y=None):
        h = _as_histogram(X)
        self.base_ = self._base(h.N)
        self.result_ = fit_grid(h, self.base_, self.kappa_grid, self.sigma_grid,
                                self.gamma_grid, self.tail_eps, self.prune_eps)
        self.kappa_ = self.result_.kappa
        self.sigma_ = self.result_.sigma
        self.gamma_ = self.result_.gamma
        self.mse_ = self.result_.mse
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "kappa_")
        h = _as_histogram(X)
        base = self.base_ if math.isclose(h.N, self.base_.N) else self._base(h.N)
        p = base.params(self.kappa_, self.sigma_, self.gamma_)
        return affine_bin_probabilities(base, p, h.edges, self.tail_eps, self.prune_eps)

    def score(self, X, y=None):
        """Negative bin-probability MSE (larger is better)."""
        h = _as_histogram(X)
        return -_histogram_mse(self.predict_proba(h), h)
