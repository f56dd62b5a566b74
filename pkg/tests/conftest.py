import math

import numpy as np
import pytest

from default_times.affine import AffineParams
from default_times.config import B_FIT, B_SWEEPS
from default_times.law import EigenStructure
from default_times.markov import PaymentSchedule, TwoStateRates

# fixed tolerances of the test suite
ROW_SUM_TOL = 1e-10
CLOSED_FORM_TOL = 1e-12

FITTED = TwoStateRates(0.3631, 0.0238)
N_DAYS = 180.0


def taylor_expm(A, dt):
    """exp(A dt) by a scaled Taylor series and repeated squaring.

    Deliberately independent of scipy: the scaling brings the norm below 0.5
    and the series is summed until the terms stop contributing.
    """
    M = np.asarray(A, dtype=float) * dt
    norm = np.max(np.sum(np.abs(M), axis=1)) if M.size else 0.0
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    M = M / 2.0 ** s
    term = np.eye(M.shape[0])
    out = term.copy()
    for k in range(1, 60):
        term = term @ M / k
        out = out + term
        if np.max(np.abs(term)) < 1e-18:
            break
    for _ in range(s):
        out = out @ out
    return out


def window_mass(r, N, i, t):
    """P(tau_e in (N_i, N_i + t]) for two states, written out longhand."""
    l1, l2 = r.lambda1, r.lambda2
    lam = l1 + l2
    q = l1 / lam * math.exp(-lam * N) + l2 / lam
    return q ** i * (l1 / lam - l1 / lam * math.exp(-lam * t)) * math.exp(-l2 * (N - t))


def gap_tail(r, N, t):
    l1, l2 = r.lambda1, r.lambda2
    lam = l1 + l2
    return ((np.exp(-l2 * t) - np.exp(-lam * N) * np.exp(l1 * t))
            / (1.0 - np.exp(-lam * N)))


@pytest.fixture(scope="session")
def es_sweeps():
    return EigenStructure.from_matrix(B_SWEEPS, [-0.52, 0.0])


@pytest.fixture(scope="session")
def es_fit():
    return EigenStructure.from_matrix(B_FIT, [-0.512, 0.0])


@pytest.fixture(scope="session")
def fig5_params():
    return AffineParams(kappa=1.0, theta=1.0, sigma=9.0, lambda_J=0.2, gamma=3.6, x0=1.0)


@pytest.fixture(scope="session")
def sweep_params():
    return AffineParams(kappa=1.0, theta=1.0, sigma=5.0, lambda_J=0.2, gamma=0.1, x0=1.0)


@pytest.fixture(scope="session")
def sched():
    return PaymentSchedule(N_DAYS)


def degenerate(theta=1.0, kappa=1.0):
    """Parameters under which the factor stays at ``theta`` forever."""
    return AffineParams(kappa=kappa, theta=theta, sigma=0.0, lambda_J=0.0, gamma=0.0,
                        x0=theta)


def rates_of(es, x=1.0):
    A = es.generator(x)
    return TwoStateRates(A[0, 1], A[1, 0])


# ---------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call" and not (report.when == "setup"
                                                         and report.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and not detail:
        detail = str(report.longrepr).strip().splitlines()[-1][:160]
    number, title = marker.args
    item.config.stash[_ACCEPTANCE_KEY].append((str(number), title, report.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in rows:
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  [{number}] {title}: {detail}")
