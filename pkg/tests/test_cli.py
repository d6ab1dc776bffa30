"""Command line contract: exit codes, file outputs, determinism."""

import click.testing
import pytest

import fracdecomp.fracterm as ft
from fracdecomp.cli import main


@pytest.fixture
def runner():
    return click.testing.CliRunner()


def _lines(path):
    return path.read_text().splitlines()


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_comparison_run(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "-p", "p6", "--method", "both",
                             "--iters", "3", "--out", str(out)])
    assert r.exit_code == 0, r.output
    summary = _lines(out / "summary.csv")
    assert summary[0] == "method,alpha,iterations,max_abs,l2,residual,seconds"
    assert len(summary) == 1 + 8  # 2 methods x iterations 0..3
    points = _lines(out / "points.csv")
    assert points[0] == "method,alpha,iterations,x,t,approx,exact,abs_error"
    assert (out / "plot.dat").exists()
    assert "wrote" in r.output


def test_solve_2d_points_carry_y(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "-p", "p2", "--iters", "1",
                             "--grid", "7,7,4", "--out", str(out)])
    assert r.exit_code == 0, r.output
    points = _lines(out / "points.csv")
    assert points[0] == "method,alpha,iterations,x,y,t,approx,exact,abs_error"


def test_solve_literal_mode_gate(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "-p", "p1", "--mode", "paper-literal",
                             "--out", str(out)])
    assert r.exit_code == 3
    assert "inconsistent" in r.output
    assert "--allow-inconsistent" in r.output


def test_solve_literal_mode_override(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "-p", "p1", "--mode", "paper-literal",
                             "--iters", "1", "--allow-inconsistent",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    summary = _lines(out / "summary.csv")
    # no exact solution in literal mode: error columns are empty-nan
    assert len(summary) == 1 + 2


def test_solve_alpha_fan_plot_blocks(runner, tmp_path):
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "-p", "p5", "--alpha", "0.6,0.8,1.0",
                             "--method", "mldm", "--iters", "2",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    blocks = [ln for ln in _lines(out / "plot.dat") if ln.startswith("# ")]
    assert len(blocks) == 3


def test_solve_outputs_are_deterministic(runner, tmp_path):
    args = ["solve", "-p", "p5", "--alpha", "0.8,1.0", "--method", "both",
            "--iters", "2"]
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        r = runner.invoke(main, args + ["--out", str(out)])
        assert r.exit_code == 0, r.output
        outs.append(out)
    a, b = outs
    assert (a / "points.csv").read_bytes() == (b / "points.csv").read_bytes()
    assert (a / "plot.dat").read_bytes() == (b / "plot.dat").read_bytes()

    def masked(p):
        # wall-clock seconds is the one honest nondeterminism in the summary
        return [ln.rpartition(",")[0] for ln in _lines(p / "summary.csv")]

    assert masked(a) == masked(b)


def test_solve_parallel_matches_serial(runner, tmp_path):
    base = ["solve", "-p", "p5", "--alpha", "0.7,1.0", "--method", "both",
            "--iters", "1"]
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert runner.invoke(main, base + ["--out", str(serial)]).exit_code == 0
    assert runner.invoke(main, base + ["--jobs", "2",
                                       "--out", str(parallel)]).exit_code == 0
    assert (serial / "points.csv").read_bytes() == (parallel / "points.csv").read_bytes()
    assert (serial / "plot.dat").read_bytes() == (parallel / "plot.dat").read_bytes()


def test_solve_honors_out_env_var(runner, tmp_path):
    out = tmp_path / "enved"
    r = runner.invoke(main, ["solve", "-p", "p6", "--iters", "1"],
                      env={"FRACDECOMP_OUT": str(out)})
    assert r.exit_code == 0, r.output
    assert (out / "summary.csv").exists()


def test_solve_config_file_and_flag_override(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = p5\nmethod = ladm\niters = 3\nalpha = 0.8\n")
    out1 = tmp_path / "cfg"
    r = runner.invoke(main, ["solve", "--config", str(cfg), "--out", str(out1)])
    assert r.exit_code == 0, r.output
    assert len(_lines(out1 / "summary.csv")) == 1 + 4
    assert _lines(out1 / "summary.csv")[1].startswith("ladm,0.8,")
    out2 = tmp_path / "cfg2"
    r = runner.invoke(main, ["solve", "--config", str(cfg), "--iters", "1",
                             "--out", str(out2)])
    assert r.exit_code == 0, r.output
    assert len(_lines(out2 / "summary.csv")) == 1 + 2


def test_solve_problem_file(runner, tmp_path):
    prob = tmp_path / "adv.txt"
    prob.write_text("alpha = 0.9\ndomain = 0, 1\nlinear = 1x:1.0\n"
                    "exact = t^2*x*(1 - x)\n")
    out = tmp_path / "run"
    r = runner.invoke(main, ["solve", "--file", str(prob), "--iters", "1",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert (out / "points.csv").exists()


def test_solve_bad_problem_file_grammar(runner, tmp_path):
    prob = tmp_path / "bad.txt"
    prob.write_text("alpha = 0.9\ndomain = 0, 1\nexact = t^2*sin(pi*x) +* x\n")
    r = runner.invoke(main, ["solve", "--file", str(prob),
                             "--out", str(tmp_path / "o")])
    assert r.exit_code == 2
    assert "^" in r.output and "column" in r.output


def test_solve_input_validation_exit_codes(runner, tmp_path):
    out = str(tmp_path / "o")
    cases = [
        ["solve", "--out", out],                                # neither
        ["solve", "-p", "p5", "--file", "x.txt", "--out", out],  # both
        ["solve", "-p", "p5", "--alpha", "1.5", "--out", out],
        ["solve", "-p", "p5", "--alpha", "0.0", "--out", out],
        ["solve", "-p", "nosuch", "--out", out],
        ["solve", "-p", "p5", "--grid", "1,5", "--out", out],
        ["solve", "-p", "p5", "--grid", "5", "--out", out],
        ["solve", "-p", "p5", "--iters", "-2", "--out", out],
        ["solve", "-p", "p5", "--tmax", "-1.0", "--out", out],
        ["solve", "-p", "p5", "--jobs", "0", "--out", out],
    ]
    for args in cases:
        r = runner.invoke(main, args)
        assert r.exit_code == 2, (args, r.output)


# ---------------------------------------------------------------------------
# list
# ---------------------------------------------------------------------------


def test_list_reports_consistency_and_shape(runner):
    r = runner.invoke(main, ["list"])
    assert r.exit_code == 0
    lines = {ln.split()[0]: ln for ln in r.output.splitlines() if ln.strip()}
    assert "inconsistent (source)" in lines["p1"]
    assert "consistent" in lines["p5"]
    assert "2D" in lines["p2"]
    assert "inconsistent (ic, source)" in lines["p4"]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def test_verify_single_check_passes(runner):
    r = runner.invoke(main, ["verify", "--only", "gamma"])
    assert r.exit_code == 0, r.output
    assert "PASS" in r.output and "gamma" in r.output


def test_verify_unattainable_quad_tol_fails_honestly(runner):
    r = runner.invoke(main, ["verify", "--only", "power-rule",
                             "--quad-tol", "1e-14"])
    assert r.exit_code == 1
    assert "FAIL" in r.output


def test_verify_detects_corrupted_gamma(runner, monkeypatch):
    # nudge the first Lanczos coefficient by 1e-9 relative: the gamma
    # probes must notice and the command must name the failing check
    bent = (ft.LANCZOS_COEFFS[0] * (1.0 + 1e-9),) + ft.LANCZOS_COEFFS[1:]
    monkeypatch.setattr(ft, "LANCZOS_COEFFS", bent)
    r = runner.invoke(main, ["verify", "--only", "gamma"])
    assert r.exit_code == 1
    assert "gamma" in r.output and "FAIL" in r.output


def test_verify_rejects_unknown_check(runner):
    r = runner.invoke(main, ["verify", "--only", "nosuch"])
    assert r.exit_code == 2
    assert "gamma" in r.output  # the list of valid names is shown
