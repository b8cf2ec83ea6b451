import csv

import numpy as np
import pytest

from pectl.actions.scenario import (
    EXIT_CONDITION_FAIL,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_PASS,
    SWEEP_COLUMNS,
    applicable_condition,
    parse_vary,
    run_scenario,
    sweep,
    write_sweep_csv,
)
from pectl.core.analysis import gain_report
from pectl.core.errors import MalformedValueError
from pectl.main import main
from pectl.utils.config import parse_config, with_output
from pectl.utils.utils import read_trajectory_csv

SMALL = {"grid_n": "51", "dt": "1e-3", "snapshot_every": "100"}


def small(text):
    given = {line.partition("=")[0].strip().lower() for line in text.splitlines()}
    return "".join(f"{k} = {v}\n" for k, v in SMALL.items() if k not in given) + text


def scenario(text, tmp_path, name="run.csv"):
    return with_output(parse_config(small(text)), tmp_path / name)


def write_cfg(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(small(text) + f"out = {tmp_path / 'out.csv'}\n")
    return str(path)


def test_open_loop_decays_at_guaranteed_rate(tmp_path):
    cfg = scenario("rho = 1\nT = 2\nmode = open_loop\n", tmp_path)
    result = run_scenario(cfg)
    assert result.condition_pass
    assert result.guaranteed_rate == pytest.approx(1.0)
    assert result.fit.rate == pytest.approx(1.0, rel=1e-2)
    assert result.decay_pass
    assert result.status == EXIT_PASS


def test_csv_has_one_row_per_step(tmp_path):
    cfg = scenario("rho = 1\nT = 0.25\n", tmp_path)
    run_scenario(cfg)
    table = read_trajectory_csv(cfg.out)
    assert len(table["t"]) == 251
    assert table["t"][0] == 0.0
    assert np.all(np.isnan(table["norm_err_u"]))


def test_runs_are_bit_identical(tmp_path):
    text = "rho = -0.2\nalpha = 0.3\nbeta = 0.3\ngamma = 2\nf1 = tanh(0.05)\nmode = output_feedback\n" \
           "T = 0.2\nnoise_std = 0.01\nseed = 5\n"
    first = run_scenario(scenario(text, tmp_path, "a.csv"))
    second = run_scenario(scenario(text, tmp_path, "b.csv"))
    assert first.trajectory.has_observer
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert not np.all(np.isnan(read_trajectory_csv(tmp_path / "a.csv")["norm_err_u"]))
    np.testing.assert_array_equal(first.trajectory.omega, second.trajectory.omega)


def test_zero_data_skips_the_fit(tmp_path):
    cfg = scenario("rho = 1\nT = 0.5\nu0 = constant(0)\n", tmp_path)
    result = run_scenario(cfg, write_csv=False)
    assert result.fit is None
    assert result.decay_pass is None
    assert result.status == EXIT_PASS
    assert not cfg.out.exists()


def test_failed_condition_sets_status(tmp_path):
    cfg = scenario("rho = -0.5\nT = 0.5\n", tmp_path)
    result = run_scenario(cfg, write_csv=False)
    assert not result.condition_pass
    assert result.decay_pass is None
    assert result.status == EXIT_CONDITION_FAIL


def test_state_feedback_meets_K1(tmp_path):
    cfg = scenario("rho = -0.5\nc1 = 2\nmode = state_feedback\nT = 2\n", tmp_path)
    result = run_scenario(cfg, write_csv=False)
    assert result.guaranteed_rate == pytest.approx(1.5)
    assert result.fit.rate >= 1.5 * 0.95
    assert result.decay_pass
    assert result.status == EXIT_PASS


def test_short_fit_window_skips_rate_audit(tmp_path):
    cfg = scenario("rho = -1\nc1 = 3\nmode = state_feedback\nT = 0.3\n", tmp_path)
    result = run_scenario(cfg, write_csv=False)
    assert result.condition_pass
    assert result.guaranteed_rate == pytest.approx(2.0)
    assert result.fit is not None
    assert (result.fit.window[1] - result.fit.window[0]) * result.guaranteed_rate < 1.0
    assert result.decay_pass is None
    assert result.status == EXIT_PASS


@pytest.mark.parametrize("mode", ["open_loop", "state_feedback", "observer_only", "output_feedback",
                                  "target_system"])
def test_applicable_condition_per_mode(mode):
    cfg = parse_config(f"rho = -0.2\nalpha = 0.3\nbeta = 0.3\ngamma = 2\nc1 = 2\nmode = {mode}\n")
    report = gain_report(cfg.params, cfg.c1)
    expected = {
        "open_loop": (report.open_loop_pass, report.M),
        "state_feedback": (report.closed_loop_pass, report.K1),
        "observer_only": (report.observer_pass, report.K3),
        "output_feedback": (report.closed_loop_pass and report.observer_pass, min(report.K1, report.K3)),
        "target_system": (report.closed_loop_pass, report.K1),
    }
    assert applicable_condition(cfg, report) == expected[mode]


def test_target_system_reports_equivalence(tmp_path):
    text = "rho = -1\nalpha = 0.3\nbeta = 0.3\ngamma = 2\nc1 = 2\nmode = target_system\n" \
           "u0 = gaussian_bump(0.5, 0.1, 1)\nT = 0.5\n"
    cfg = with_output(parse_config(text + "grid_n = 201\ndt = 1e-4\nsnapshot_every = 500\n"), tmp_path / "t.csv")
    result = run_scenario(cfg, write_csv=False)
    assert result.trajectory.transformed
    assert result.equivalence_error < 1e-2


def test_parse_vary():
    key, values = parse_vary("C1=0.5:2:4")
    assert key == "c1"
    np.testing.assert_allclose(values, [0.5, 1.0, 1.5, 2.0])
    for bad in ("c1", "c1=1:2", "mode=1:2:3", "c1=a:b:3", "c1=1:2:0", "c1=1:2:3:4"):
        with pytest.raises(MalformedValueError):
            parse_vary(bad)


def test_sweep_keeps_order_and_statuses(tmp_path):
    cfg = scenario("mode = state_feedback\nrho = -1\nT = 0.5\n", tmp_path)
    rows = sweep(cfg, "c1", [0.5, 3.0, 4.0, -1.0], workers=3)
    assert [row.value for row in rows] == [0.5, 3.0, 4.0, -1.0]
    assert [row.status for row in rows] == [EXIT_CONDITION_FAIL, EXIT_PASS, EXIT_PASS, EXIT_CONFIG]
    assert rows[1].result.cfg.c1 == 3.0
    assert rows[3].result is None and "c1" in rows[3].message

    out = tmp_path / "sweep.csv"
    write_sweep_csv(rows, out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 5
    assert lines[4].endswith(f",{EXIT_CONFIG}")

    table = list(csv.DictReader(lines))
    for key in ("eta", "K4", "L1", "L2", "L3", "spectral_margin"):
        assert float(table[1][key]) == pytest.approx(float(rows[1].result.report.as_dict()[key]), rel=1e-12)
    assert float(table[1]["K1"]) == pytest.approx(2.0)
    assert table[1]["decay_pass"] == ""
    assert all(table[3][key] == "" for key in SWEEP_COLUMNS[1:-1])


def test_sweep_reports_divergence(tmp_path):
    cfg = scenario("rho = -50\nT = 1\ndt = 1e-2\n", tmp_path)
    rows = sweep(cfg, "rho", [-50.0], workers=1)
    assert rows[0].status == EXIT_DIVERGENCE


def test_cli_simulate_exit_codes(tmp_path, capsys):
    good = write_cfg(tmp_path, "rho = 1\nT = 1\n")
    assert main(["simulate", "--config", good]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "open_loop_pass = pass" in out
    assert "guaranteed_rate = 1" in out
    assert (tmp_path / "out.csv").exists()

    failing = write_cfg(tmp_path, "rho = -0.5\nT = 0.5\n", "fail.cfg")
    assert main(["simulate", "--config", failing]) == EXIT_CONDITION_FAIL

    diverging = write_cfg(tmp_path, "rho = -50\nT = 1\ndt = 1e-2\n", "blow.cfg")
    assert main(["simulate", "--config", diverging]) == EXIT_DIVERGENCE


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("gamma = -9.8696\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["check-gains", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["kernel", "--c1", "-1", "--out", str(tmp_path / "k.csv")]) == EXIT_CONFIG


def test_cli_check_gains(tmp_path, capsys):
    path = write_cfg(tmp_path, "rho = -0.5\nc1 = 2\nmode = state_feedback\n")
    assert main(["check-gains", "--config", path]) == EXIT_PASS
    assert "closed_loop_pass = pass" in capsys.readouterr().out
    assert main(["check-gains", "--config", path, "--c1", "0.25"]) == EXIT_CONDITION_FAIL
    capsys.readouterr()
    assert main(["check-gains", "--config", path, "--target-k1", "1"]) == EXIT_PASS
    assert "design_c1 = " in capsys.readouterr().out
    assert main(["check-gains", "--config", path, "--target-k1", "100", "--c1-max", "5"]) == EXIT_CONDITION_FAIL
    assert "design = infeasible" in capsys.readouterr().out


def test_cli_kernel(tmp_path, capsys):
    out = tmp_path / "k.csv"
    inverse = tmp_path / "l.csv"
    assert main(["kernel", "--c1", "2", "--n", "51", "--out", str(out), "--inverse", str(inverse)]) == EXIT_PASS
    printed = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(printed["k11"]) == pytest.approx(-1.0)
    assert int(printed["n_points"]) == 51
    assert float(printed["l2_norm"]) <= float(printed["Nc1"])
    assert out.exists() and inverse.exists()


def test_cli_sweep(tmp_path):
    path = write_cfg(tmp_path, "mode = state_feedback\nrho = -1\nT = 0.3\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", path, "--vary", "c1=3:4:2", "--workers", "2", "--out", str(out)]) == EXIT_PASS
    assert len(out.read_text().splitlines()) == 3
    assert main(["sweep", "--config", path, "--vary", "c1=0.5:4:2"]) == EXIT_CONDITION_FAIL
    assert main(["sweep", "--config", path, "--vary", "nope=1:2:2"]) == EXIT_CONFIG
