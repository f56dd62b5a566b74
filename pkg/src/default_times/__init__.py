"""Economic versus recorded default times in Markov-chain credit rating models.

The firm's rating is a continuous-time Markov chain whose last state is
default. Default is recorded only on payment dates ``N, 2N, ...``; the
economic default time is the last moment before that at which the firm was
still out of default. The package computes the laws of both times and of
their gap for constant rates and for rates driven by an affine
jump-diffusion factor, simulates them by Monte Carlo, and calibrates the
models to binned gap data.
"""

from .affine import AffineParams, TransformCoeffs, affine_transform, riccati_analytic, riccati_ode
from .calibrate import (AffineGapGridSearch, GapHistogram, GridFitResult, MleResult,
                        TwoStateGapModel, detect_units, fit_grid, fit_mle, load_table1,
                        loglik_two_state)
from .config import PRESETS, RunConfig
from .exceptions import (DefaultTimesError, EmptyLawError, InvalidInputError,
                         TransformDivergenceError, TruncationError)
from .law import (EigenStructure, check_ushape, gap_curve, gap_density_curve, gap_survival,
                  gap_survival_curve, prop3_enumerate, prop4_recursive, recorded_law,
                  tau_e_law)
from .markov import (GeneratorMatrix, PaymentSchedule, TwoStateRates, matrix_exponential,
                     prop2_constant_law, two_state_gap_survival)
from .simulate import SimConfig, empirical_gap_law, simulate_default_times

__version__ = "0.1.0"

__all__ = [
    "AffineGapGridSearch", "AffineParams", "DefaultTimesError", "EigenStructure",
    "EmptyLawError", "GapHistogram", "GeneratorMatrix", "GridFitResult", "InvalidInputError",
    "MleResult", "PRESETS", "PaymentSchedule", "RunConfig", "SimConfig", "TransformCoeffs",
    "TransformDivergenceError", "TruncationError", "TwoStateGapModel", "TwoStateRates",
    "affine_transform", "check_ushape", "detect_units", "empirical_gap_law", "fit_grid",
    "fit_mle", "gap_curve", "gap_density_curve", "gap_survival", "gap_survival_curve",
    "load_table1", "loglik_two_state", "matrix_exponential", "prop2_constant_law",
    "prop3_enumerate", "prop4_recursive", "recorded_law", "riccati_analytic", "riccati_ode",
    "simulate_default_times", "tau_e_law", "two_state_gap_survival",
]
