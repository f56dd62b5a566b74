import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import FITTED, N_DAYS
from default_times.cli import main
from default_times.config import PRESETS, RunConfig, preset
from default_times.exceptions import InvalidInputError

DATA = "bin_left,bin_right,count\n" + "".join(
    f"{18 * i},{18 * (i + 1)},{c}\n" for i, c in enumerate([24, 13, 6, 5, 3, 1, 4, 4, 2, 11]))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture
def table1_csv(tmp_path):
    path = tmp_path / "table1.csv"
    path.write_text(DATA)
    return path


def write_json(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def degenerate_config(**extra):
    cfg = preset("fig2-kappa-sweep")
    del cfg["sweep"]
    cfg["params"].update(sigma=0.0, lambda_J=0.0, gamma=0.0, x0=1.0, theta=1.0)
    cfg.update(extra)
    return cfg


def test_dist_constant_full_grid(capsys):
    code, out, _ = run(capsys, "dist-constant", "--lambda1", 0.3631, "--lambda2", 0.0238,
                       "--N", 180, "--grid-points", 181)
    assert code == 0
    header, rows = table(out)
    assert header == ["t", "survival", "density"]
    assert rows.shape == (181, 3)
    assert rows[0, 1] == 1.0 and rows[-1, 1] == 0.0
    assert np.trapezoid(rows[:, 2], rows[:, 0]) == pytest.approx(1.0, abs=1e-3)


def test_dist_constant_two_points(capsys):
    code, out, _ = run(capsys, "dist-constant", "--lambda1", 0.3631, "--lambda2", 0.0238,
                       "--N", 180, "--grid-points", 2)
    assert code == 0
    _, rows = table(out)
    np.testing.assert_array_equal(rows[:, 0], [0.0, 180.0])


def test_twelve_significant_digits(capsys):
    _, out, _ = run(capsys, "dist-constant", "--lambda1", 0.3631, "--lambda2", 0.0238,
                    "--N", 180, "--grid-points", 7)
    value = out.splitlines()[2].split(",")[1]
    assert value == "%.12g" % float(value) and len(value.replace("0.", "")) <= 13


@pytest.mark.parametrize("argv", [
    ["dist-constant", "--lambda2", "0.0238", "--N", "180"],
    ["dist-constant", "--lambda1", "0", "--lambda2", "0.0238", "--N", "180"],
    ["dist-constant", "--lambda1", "nan", "--lambda2", "0.0238", "--N", "180"],
    ["dist-constant", "--lambda1", "1", "--lambda2", "1", "--N", "180", "--grid-points", "1"],
    ["no-such-command"],
    [],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_missing_flag_is_named(capsys):
    _, _, err = run(capsys, "dist-constant", "--lambda2", 0.0238, "--N", 180)
    assert "--lambda1" in err


def test_dist_affine_fig5(capsys):
    code, out, _ = run(capsys, "dist-affine", "--preset", "fig5-fit")
    assert code == 0
    header, rows = table(out)
    assert header == ["t", "survival", "density", "tail_bound"]
    assert rows.shape == (181, 4)
    assert np.all(rows[:, 3] < 1e-6)


def test_dist_affine_sweep_has_parameter_column(capsys):
    code, out, _ = run(capsys, "dist-affine", "--preset", "fig3-gamma-sweep",
                       "--grid-points", 5)
    assert code == 0
    header, rows = table(out)
    assert header[0] == "gamma" and rows.shape == (25, 5)
    np.testing.assert_array_equal(np.unique(rows[:, 0]), [0.1, 0.5, 1.0, 2.0, 4.0])


def test_dist_affine_degenerate_equals_constant(capsys, tmp_path):
    cfg = degenerate_config(tail_eps=1e-12)
    path = write_json(tmp_path, cfg)
    code, out, _ = run(capsys, "dist-affine", "--config", path)
    assert code == 0
    _, aff = table(out)
    r = RunConfig.from_dict(cfg).degenerate_rates()
    code, out, _ = run(capsys, "dist-constant", "--lambda1", repr(r.lambda1),
                       "--lambda2", repr(r.lambda2), "--N", 180)
    _, con = table(out)
    np.testing.assert_allclose(aff[:, :3], con, atol=1e-8, rtol=0)


def test_dist_affine_singular_B_exit_2(capsys, tmp_path):
    cfg = degenerate_config(B=[[1.0, 2.0], [2.0, 4.0]])
    code, _, err = run(capsys, "dist-affine", "--config", write_json(tmp_path, cfg))
    assert code == 2 and "invertible" in err


def test_dist_affine_admission_failure_names_point(capsys, tmp_path):
    cfg = degenerate_config(mu=[0.52, 0.0])
    code, _, err = run(capsys, "dist-affine", "--config", write_json(tmp_path, cfg))
    assert code == 2 and "negative off-diagonal" in err and "x=" in err


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra_key=1),
    lambda c: c["params"].pop("kappa"),
    lambda c: c.update(N="180"),
    lambda c: c.update(sweep={"parameter": "mu", "values": [1]}),
    lambda c: c.update(kind="other"),
])
def test_config_validation(mutate):
    cfg = preset("fig5-fit")
    mutate(cfg)
    with pytest.raises(InvalidInputError):
        RunConfig.from_dict(cfg)


def test_bad_json_exit_2(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"kind\": ")
    code, _, err = run(capsys, "dist-affine", "--config", path)
    assert code == 2 and "line 1" in err


def test_presets_load():
    for name in PRESETS:
        cfg = RunConfig.from_dict(preset(name))
        assert cfg.kind == "affine" and cfg.N == N_DAYS
    with pytest.raises(InvalidInputError):
        preset("fig9")


def test_simulate_constant(capsys, tmp_path):
    out_path = tmp_path / "sim.csv"
    code, _, err = run(capsys, "simulate", "--lambda1", 0.3631, "--lambda2", 0.0238,
                       "--N", 180, "--paths", 20000, "--seed", 3, "-o", out_path)
    assert code == 0 and "censored=" in err
    header, rows = table(out_path.read_text())
    assert header == ["bin_left", "bin_right", "count", "frequency", "std_err", "analytic",
                      "z_score", "n_paths", "censored"]
    assert rows.shape == (10, 9)
    assert rows[:, 2].sum() + rows[0, 8] == 20000
    assert np.sum(np.abs(rows[:, 6]) > 3) <= 1


def test_simulate_dt_too_large(capsys):
    code, _, err = run(capsys, "simulate", "--lambda1", 0.3631, "--lambda2", 0.0238,
                       "--N", 180, "--paths", 10, "--dt", 18.5)
    assert code == 2 and "N/10" in err


def test_simulate_all_censored_exit_1(capsys, tmp_path):
    cfg = {"kind": "affine", "N": 180, "B": [[0.0, 1.0], [1.0, 1.0]], "mu": [-0.3, 0.0],
           "params": {"kappa": 1, "theta": 1, "sigma": 0, "lambda_J": 0, "gamma": 0,
                      "x0": 1}}
    code, _, err = run(capsys, "simulate", "--config", write_json(tmp_path, cfg),
                       "--paths", 50, "--dt", 18, "--horizon", 2)
    assert code == 1 and "censored" in err


def test_simulate_needs_a_model(capsys):
    code, _, _ = run(capsys, "simulate", "--paths", 10)
    assert code == 2


def test_fit_mle_report(capsys, table1_csv):
    code, out, _ = run(capsys, "fit", "--mode", "mle", "--data", table1_csv, "--unit", "day")
    assert code == 0
    rep = json.loads(out)
    assert rep["unit"] == "day" and len(rep["stationarity_residuals"]) == 2
    assert {"lambda1", "lambda2", "loglik", "converged", "message"} <= set(rep)


def test_fit_mle_table1_reproduces_printed_rates(capsys, table1_csv):
    """Expected: the printed rates. Known to fail: the likelihood escapes to infinity."""
    code, out, _ = run(capsys, "fit", "--mode", "mle", "--data", table1_csv)
    assert code == 0
    rep = json.loads(out)
    assert set(rep["unit_hypotheses"]) == {"day", "bin", "period"}
    assert abs(rep["lambda1"] - 0.3631) <= 1e-3 and abs(rep["lambda2"] - 0.0238) <= 1e-3


def test_fit_mle_single_interior_bin_converges(capsys, tmp_path):
    """Expected: converged=true. Known to fail: the supremum sits at lambda1 -> 0."""
    counts = [0, 0, 0, 0, 50, 0, 0, 0, 0, 0]
    path = tmp_path / "one.csv"
    path.write_text("bin_left,bin_right,count\n" + "".join(
        f"{18 * i},{18 * (i + 1)},{c}\n" for i, c in enumerate(counts)))
    code, out, _ = run(capsys, "fit", "--mode", "mle", "--data", path, "--unit", "day")
    assert code == 0
    rep = json.loads(out)
    assert np.isfinite(rep["lambda1"]) and np.isfinite(rep["lambda2"])
    assert rep["converged"] is True


def test_fit_grid_single_point(capsys, table1_csv):
    code, out, _ = run(capsys, "fit", "--mode", "grid", "--data", table1_csv,
                       "--preset", "fig5-fit", "--kappa-grid", "1", "--sigma-grid", "9",
                       "--gamma-grid", "3.6")
    assert code == 0
    rep = json.loads(out)
    assert (rep["kappa"], rep["sigma"], rep["gamma"]) == (1.0, 9.0, 3.6)
    assert rep["mse"] >= 0 and rep["evaluated"] == 1


def test_fit_malformed_csv_reports_line(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("bin_left,bin_right,count\n0,18,4\n18,36,oops\n")
    code, _, err = run(capsys, "fit", "--mode", "mle", "--data", path)
    assert code == 2 and "line 3" in err


def test_fit_missing_file_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "fit", "--mode", "mle", "--data", tmp_path / "nope.csv")
    assert code == 2


def test_fit_bad_grid_exit_2(capsys, table1_csv):
    code, _, _ = run(capsys, "fit", "--mode", "grid", "--data", table1_csv,
                     "--preset", "fig5-fit", "--kappa-grid", "1,x")
    assert code == 2


@pytest.mark.parametrize("l1,l2,expect", [
    (0.3631, 0.0238, ("true", "true")),
    (0.2, 0.2, (None, "true")),
    (0.2, 0.0, ("false", None)),
])
def test_check_ushape(capsys, l1, l2, expect):
    code, out, _ = run(capsys, "check-ushape", "--lambda1", l1, "--lambda2", l2, "--N", 180)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("condition (i): ") and "slack=" in lines[0]
    for line, want in zip(lines, expect):
        if want is not None:
            assert line.split(": ")[1].split()[0] == want


def test_threads_env_validation(capsys, monkeypatch):
    monkeypatch.setenv("DEFAULT_TIMES_THREADS", "zero")
    code, _, _ = run(capsys, "simulate", "--lambda1", 0.3, "--lambda2", 0.02, "--N", 180,
                     "--paths", 10)
    assert code == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "default_times.cli", "check-ushape",
                           "--lambda1", str(FITTED.lambda1), "--lambda2",
                           str(FITTED.lambda2), "--N", "180"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("condition (i): true")
