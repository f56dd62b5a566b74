"""Command-line interface: ``default-times <subcommand> ...``.

Exit codes: 0 on success, 1 on a numerical or runtime failure, 2 on a usage
or validation error. Tabular output is CSV with a header row and numbers
printed with 12 significant digits; reports are JSON or plain text. Output
goes to ``--output`` when given, otherwise to standard output.

Times are used as given: ``N`` and the rates must share one unit (the
bundled data use days and rates per day).
"""

import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from .affine import AffineParams
from .calibrate import (AffineBase, DataFormatError, GapHistogram, UNIT_HYPOTHESES,
                        affine_bin_probabilities, detect_units, fit_grid, fit_mle,
                        stationarity_residuals, two_state_bin_probabilities)
from .config import PRESETS, RunConfig, preset
from .exceptions import DefaultTimesError, InvalidInputError
from .law import EigenStructure, check_ushape, constant_gap_curve, gap_curve, ushape_slack
from .markov import PaymentSchedule, TwoStateRates
from .simulate import SCHEMES, SimConfig, empirical_gap_law, simulate_default_times

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
FLOAT_FORMAT = "%.12g"


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FORMAT % x


def _csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _emit(text, output):
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", newline="") as fh:
            fh.write(text)


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DEFAULT_TIMES_THREADS")
    if env is None or env == "":
        return None
    try:
        n = int(env)
    except ValueError:
        raise InvalidInputError(f"DEFAULT_TIMES_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise InvalidInputError("DEFAULT_TIMES_THREADS must be >= 1")
    return n


def _load_config(args, required=True):
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise InvalidInputError("use either --config or --preset, not both")
    if getattr(args, "preset", None):
        return RunConfig.from_dict(preset(args.preset))
    if getattr(args, "config", None):
        return RunConfig.from_json(args.config)
    if required:
        raise InvalidInputError("one of --config or --preset is required")
    return None


# ---------------------------------------------------------------------------
# subcommands


def cmd_dist_constant(args):
    r = TwoStateRates(args.lambda1, args.lambda2)
    curve = constant_gap_curve(r, args.N, args.grid_points)
    rows = zip(curve.t, curve.survival, curve.density)
    _emit(_csv(["t", "survival", "density"], rows), args.output)
    return EXIT_OK


def cmd_dist_affine(args):
    cfg = _load_config(args)
    if cfg.kind != "affine":
        raise InvalidInputError("dist-affine needs an affine configuration")
    grid_points = args.grid_points or cfg.grid_points
    header = ["t", "survival", "density", "tail_bound"]
    rows = []
    for value, params in cfg.swept():
        curve = gap_curve(cfg.es, params, cfg.schedule, grid_points, cfg.tail_eps,
                          cfg.prune_eps)
        lead = [] if value is None else [value]
        rows.extend(lead + list(r) for r in
                    zip(curve.t, curve.survival, curve.density, curve.tail_bound))
    if cfg.sweep is not None:
        header = [cfg.sweep.parameter] + header
    _emit(_csv(header, rows), args.output)
    return EXIT_OK


def _simulation_model(args):
    cfg = _load_config(args, required=False)
    if cfg is None:
        if args.lambda1 is None or args.lambda2 is None or args.N is None:
            raise InvalidInputError(
                "give --config/--preset, or --lambda1, --lambda2 and --N for constant rates")
        raw = {"kind": "constant", "lambda1": args.lambda1, "lambda2": args.lambda2,
               "N": args.N}
        cfg = RunConfig.from_dict(raw)
    if cfg.sweep is not None:
        raise InvalidInputError("simulate does not accept a sweep configuration")
    return cfg


def cmd_simulate(args):
    cfg = _simulation_model(args)
    sched = PaymentSchedule(cfg.N, cfg.schedule.i_max)
    dt = args.dt if args.dt is not None else (cfg.dt or cfg.N / 1800.0)
    sim = SimConfig(args.paths, dt, args.seed, args.horizon, _threads(args), args.scheme)
    sim.steps_per_period(cfg.N)
    bins = args.bins
    edges = np.linspace(0.0, cfg.N, bins + 1)
    if cfg.kind == "constant":
        es = EigenStructure.from_generator(cfg.rates.generator().rates)
        params = AffineParams(1.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    else:
        es, params = cfg.es, cfg.params
    res = simulate_default_times(es, params, sched, sim)
    law = empirical_gap_law(res, bins)
    if cfg.kind == "constant":
        analytic = two_state_bin_probabilities(cfg.rates, edges)
    else:
        base = AffineBase(es, params.theta, params.lambda_J, params.x0, cfg.N,
                          cfg.schedule.i_max)
        analytic = affine_bin_probabilities(base, params, edges, cfg.tail_eps,
                                            cfg.prune_eps)
    n = law.n_observed
    se_model = np.sqrt(analytic * (1.0 - analytic) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se_model > 0, (law.frequency - analytic) / se_model, 0.0)
    header = ["bin_left", "bin_right", "count", "frequency", "std_err", "analytic",
              "z_score", "n_paths", "censored"]
    rows = [(a, b, c, f, s, p, zz, law.n_paths, law.n_censored)
            for (a, b, c, f, s), p, zz in zip(law.rows(), analytic, z)]
    _emit(_csv(header, rows), args.output)
    print(f"paths={law.n_paths} censored={law.n_censored} dt={res.dt:.12g} "
          f"max|z|={np.max(np.abs(z)):.3g}", file=sys.stderr)
    return EXIT_OK


def _parse_grid(text, name):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"--{name} must be a comma-separated list of numbers")
    if not vals:
        raise InvalidInputError(f"--{name} is empty")
    return vals


def cmd_fit(args):
    if not os.path.isfile(args.data):
        raise InvalidInputError(f"--data: no such file {args.data!r}")
    h = GapHistogram.from_csv(args.data)
    if args.mode == "mle":
        init = TwoStateRates(args.init_lambda1, args.init_lambda2)
        if args.unit == "auto":
            report = detect_units(h, init=init)
            res = report.best
            hypotheses = {u: {"lambda1": r.lambda1, "lambda2": r.lambda2,
                              "loglik": r.loglik, "converged": r.converged,
                              "message": r.message}
                          for u, r in report.results.items()}
            matched = report.matches
        else:
            res = fit_mle(h, init=init, unit=args.unit)
            hypotheses, matched = None, None
        scale = {"day": 1.0, "bin": h.delta, "period": h.N}[res.unit]
        resid = stationarity_residuals(res.rates, h.rescaled(scale))
        out = {"mode": "mle", "unit": res.unit, "lambda1": res.lambda1,
               "lambda2": res.lambda2, "loglik": res.loglik, "converged": res.converged,
               "iterations": res.iterations, "evaluations": res.evaluations,
               "stationarity_residuals": list(map(float, resid)),
               "message": res.message}
        if hypotheses is not None:
            out["unit_hypotheses"] = hypotheses
            out["matching_units"] = matched
    else:
        cfg = _load_config(args)
        if cfg.kind != "affine":
            raise InvalidInputError("grid mode needs an affine base configuration")
        p = cfg.params
        base = AffineBase(cfg.es, p.theta, p.lambda_J, p.x0, cfg.N, cfg.schedule.i_max)
        grids = {k: (_parse_grid(getattr(args, f"{k}_grid"), f"{k}-grid")
                     if getattr(args, f"{k}_grid") else [getattr(p, k)])
                 for k in ("kappa", "sigma", "gamma")}
        res = fit_grid(h, base, grids["kappa"], grids["sigma"], grids["gamma"],
                       cfg.tail_eps, cfg.prune_eps)
        out = {"mode": "grid", "kappa": res.kappa, "sigma": res.sigma, "gamma": res.gamma,
               "mse": res.mse,
               "grid": {"kappa": list(map(float, res.kappa_grid)),
                        "sigma": list(map(float, res.sigma_grid)),
                        "gamma": list(map(float, res.gamma_grid))},
               "evaluated": int(len(res.table)), "skipped": len(res.skipped)}
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def cmd_check_ushape(args):
    r = TwoStateRates(args.lambda1, args.lambda2)
    c1, c2 = check_ushape(r, args.N)
    s1, s2 = ushape_slack(r, args.N)
    text = (f"condition (i): {str(c1).lower()} slack={FLOAT_FORMAT % s1}\n"
            f"condition (ii): {str(c2).lower()} slack={FLOAT_FORMAT % s2}\n")
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _finite(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return v


def build_parser():
    parser = _Parser(prog="default-times",
                     description="Economic and recorded default times under Markov "
                                 "rating models.")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $DEFAULT_TIMES_THREADS or all)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output(p):
        p.add_argument("--output", "-o", default=None, help="output file (default stdout)")

    def model_source(p):
        p.add_argument("--config", help="JSON model configuration")
        p.add_argument("--preset", choices=sorted(PRESETS))

    p = sub.add_parser("dist-constant", help="gap law of the two-state constant-rate chain")
    p.add_argument("--lambda1", type=_finite, required=True)
    p.add_argument("--lambda2", type=_finite, required=True)
    p.add_argument("--N", type=_finite, required=True)
    p.add_argument("--grid-points", type=_positive_int, default=181)
    output(p)
    p.set_defaults(func=cmd_dist_constant)

    p = sub.add_parser("dist-affine", help="gap law under affine stochastic rates")
    model_source(p)
    p.add_argument("--grid-points", type=_positive_int, default=None)
    output(p)
    p.set_defaults(func=cmd_dist_affine)

    p = sub.add_parser("simulate", help="Monte Carlo gap histogram with analytic comparison")
    model_source(p)
    p.add_argument("--lambda1", type=_finite)
    p.add_argument("--lambda2", type=_finite)
    p.add_argument("--N", type=_finite)
    p.add_argument("--paths", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--dt", type=_finite, default=None,
                   help="time step (default: the configuration's, else N/1800)")
    p.add_argument("--horizon", type=_positive_int, default=50)
    p.add_argument("--bins", type=_positive_int, default=10)
    p.add_argument("--scheme", choices=SCHEMES, default="qe")
    output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="calibrate to a gap histogram")
    p.add_argument("--mode", choices=("mle", "grid"), required=True)
    p.add_argument("--data", required=True, help="CSV with bin_left,bin_right,count")
    p.add_argument("--unit", choices=("auto",) + UNIT_HYPOTHESES, default="auto")
    p.add_argument("--init-lambda1", type=_finite, default=1.0)
    p.add_argument("--init-lambda2", type=_finite, default=0.1)
    model_source(p)
    p.add_argument("--kappa-grid", default=None, help="comma-separated values")
    p.add_argument("--sigma-grid", default=None, help="comma-separated values")
    p.add_argument("--gamma-grid", default=None, help="comma-separated values")
    output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check-ushape", help="sufficient U-shape conditions")
    p.add_argument("--lambda1", type=_finite, required=True)
    p.add_argument("--lambda2", type=_finite, required=True)
    p.add_argument("--N", type=_finite, required=True)
    output(p)
    p.set_defaults(func=cmd_check_ushape)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {args.data}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DefaultTimesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
