"""Grids, error norms, PDE residuals, and the quadrature cross-check."""

import math

import numpy as np
import pytest

from fracdecomp.decomp import ladm_solve, mldm_solve
from fracdecomp.evaluation import (
    EvalError,
    QuadratureError,
    convergence_report,
    default_grid,
    evaluate_series_grid,
    grid_error,
    make_grid,
    residual,
    rl_integral_quadrature,
)
from fracdecomp.fracterm import Series
from fracdecomp.grammar import parse_series
from fracdecomp.problems import PROBLEM_IDS, builtin


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def test_make_grid_validates_counts():
    with pytest.raises(EvalError):
        make_grid((0.0, 1.0), nx=1)
    with pytest.raises(EvalError):
        make_grid((0.0, 1.0), nt=1)
    with pytest.raises(EvalError):
        make_grid((0.0, 1.0), (0.0, 1.0), ny=1)


def test_make_grid_validates_tmax():
    with pytest.raises(EvalError):
        make_grid((0.0, 1.0), tmax=0.0)
    with pytest.raises(EvalError):
        make_grid((0.0, 1.0), tmax=-2.0)


def test_evaluate_series_grid_shapes():
    g1 = make_grid((0.0, 2.0), nx=41, nt=21)
    a = evaluate_series_grid(parse_series("t*x"), g1)
    assert a.shape == (41, 21)
    g2 = make_grid((0.0, 2.0), (0.0, 2.0), nx=11, ny=9, nt=5)
    b = evaluate_series_grid(parse_series("t*x*y"), g2)
    assert b.shape == (11, 9, 5)


def test_evaluate_series_grid_time_zero_constant_term():
    # t^0 evaluates to 1 on the t = 0 slice, not 0^0 = 0
    g = make_grid((0.0, 1.0), nx=5, nt=3)
    a = evaluate_series_grid(Series.of(0.0, 2.0), g)
    assert np.all(a[:, 0] == 2.0)


# ---------------------------------------------------------------------------
# grid_error
# ---------------------------------------------------------------------------


def test_grid_error_self_is_zero():
    s = parse_series("t^2*x*(2 - x) + t*sin(x)")
    g = make_grid((0.0, 2.0))
    assert grid_error(s, s, g).max_abs == 0.0


def test_grid_error_peak_location_and_value():
    # |0 - t^2 x(2-x)| on [0,2]x[0,1] peaks at x = 1, t = 1 with value 1
    s = parse_series("t^2*x*(2 - x)")
    g = make_grid((0.0, 2.0))
    rep = grid_error(Series.zero(), s, g)
    assert rep.max_abs == 1.0
    i, k = np.unravel_index(np.argmax(rep.table), rep.table.shape)
    assert g.xs[i] == 1.0 and g.ts[k] == 1.0


def test_grid_error_symmetry_and_norm_order():
    a = parse_series("t*sin(x)")
    b = parse_series("t*cos(x)")
    g = make_grid((0.0, 1.0))
    ra, rb = grid_error(a, b, g), grid_error(b, a, g)
    assert ra.max_abs == rb.max_abs
    assert ra.l2 == rb.l2
    assert ra.l2 <= ra.max_abs


# ---------------------------------------------------------------------------
# residual
# ---------------------------------------------------------------------------


def test_residual_of_exact_solution_vanishes():
    for pid in PROBLEM_IDS:
        spec = builtin(pid, alpha=0.7)
        g = default_grid(spec)
        assert residual(spec.exact, spec, g) <= 1e-10, pid


def test_residual_of_zero_is_source_magnitude():
    spec = builtin("p6", alpha=0.7)
    g = default_grid(spec)
    h = np.abs(evaluate_series_grid(spec.h, g))
    assert abs(residual(Series.zero(), spec, g) - float(h.max())) <= 1e-12


def test_residual_decreases_along_iterations():
    spec = builtin("p5", alpha=0.8)
    g = default_grid(spec)
    trace = mldm_solve(spec, 3)
    vals = [residual(trace.records[n].partial_sum, spec, g) for n in (1, 2, 3)]
    assert vals[1] <= vals[0] and vals[2] <= vals[1]


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def test_quadrature_constant_alpha_one():
    # I^1 of 1 over [0, 2] is 2
    assert abs(rl_integral_quadrature(lambda tau: 1.0, 1.0, 2.0) - 2.0) <= 1e-12


def test_quadrature_linear_half_order():
    # I^0.5 tau at t = 1 is Gamma(2)/Gamma(2.5) = 1/Gamma(2.5)
    got = rl_integral_quadrature(lambda tau: tau, 0.5, 1.0)
    assert abs(got - 1.0 / math.gamma(2.5)) <= 1e-12


def test_quadrature_quadratic_classical():
    got = rl_integral_quadrature(lambda tau: tau * tau, 1.0, 1.0)
    assert abs(got - 1.0 / 3.0) <= 1e-12


def test_quadrature_degree_eight_polynomial():
    # I^0.5 tau^8 at t = 1 is Gamma(9)/Gamma(9.5)
    got = rl_integral_quadrature(lambda tau: tau ** 8, 0.5, 1.0)
    assert abs(got - math.gamma(9.0) / math.gamma(9.5)) <= 1e-9


def test_quadrature_refuses_wild_integrand():
    # the two node counts disagree on a 400 rad/s oscillation
    with pytest.raises(QuadratureError):
        rl_integral_quadrature(lambda tau: math.cos(400.0 * tau), 0.5, 1.0)


# ---------------------------------------------------------------------------
# convergence_report
# ---------------------------------------------------------------------------


def test_convergence_report_single_seed_trace():
    spec = builtin("p5", alpha=1.0)
    g = default_grid(spec)
    rows = convergence_report([ladm_solve(spec, 0)], spec, g)
    assert len(rows) == 1
    assert rows[0].iterations == 0
    assert rows[0].method == "ladm"


def test_convergence_report_comparison_rows():
    spec = builtin("p5", alpha=1.0)
    g = default_grid(spec)
    traces = [ladm_solve(spec, 3), mldm_solve(spec, 3)]
    rows = convergence_report(traces, spec, g)
    rows = [r for r in rows if r.iterations in (1, 2, 3)]
    assert len(rows) == 6
    by_key = {(r.method, r.iterations): r for r in rows}
    for n in (1, 2, 3):
        assert by_key[("mldm", n)].max_abs <= by_key[("ladm", n)].max_abs
    for method in ("ladm", "mldm"):
        secs = [by_key[(method, n)].seconds for n in (1, 2, 3)]
        assert secs == sorted(secs)
