"""Boundary correction, decomposition polynomials, and the two solvers."""

import dataclasses
import random

import pytest

from fracdecomp.decomp import (
    BoundaryData,
    DecompError,
    LinearOpSpec,
    NonlinearFactor,
    NonlinearOpSpec,
    NonlinearProduct,
    adomian_polys,
    boundary_correct,
    jafari_polys,
    ladm_solve,
    mldm_solve,
)
from fracdecomp.fracterm import (
    Series,
    initial_value,
    series_add,
    series_equal,
    series_mul,
    series_scale,
    series_substitute,
)
from fracdecomp.grammar import parse_series, parse_spatial
from fracdecomp.problems import ProblemSpec, builtin
from fracdecomp.symx import Var, equal_sampled

SQUARE = NonlinearOpSpec((NonlinearProduct(1.0, (NonlinearFactor(0, "x", 2),)),))


# ---------------------------------------------------------------------------
# boundary_correct
# ---------------------------------------------------------------------------


def test_boundary_correct_quadratic_example():
    # u = x^2 t^2 + 0.2 x^4 t^5 on [0,1] with g0 = 0, g1 = t^2 leaves a
    # residual 0.2 t^5 at x = 1; blending weight x moves it to x^4 - x
    u = parse_series("x^2*t^2 + 0.2*x^4*t^5")
    bd = BoundaryData.interval(Series.zero(), parse_series("t^2"))
    got = boundary_correct(u, bd, (0.0, 1.0))
    want = parse_series("x^2*t^2 + 0.2*t^5*(x^4 - x)")
    assert series_equal(got, want, (0.0, 1.0), 1e-12)


def test_boundary_correct_interpolates_exactly():
    # not approximately: the defect series after substitution has no terms
    u = parse_series("x^2*t^2 + 0.2*x^4*t^5")
    g1 = parse_series("t^2")
    bd = BoundaryData.interval(Series.zero(), g1)
    star = boundary_correct(u, bd, (0.0, 1.0))
    at0 = series_substitute(star, "x", 0.0)
    at1 = series_substitute(star, "x", 1.0)
    assert at0.terms == ()
    assert series_add(at1, series_scale(g1, -1.0)).terms == ()


def test_boundary_correct_keeps_satisfying_input():
    u = parse_series("sin(pi*x)*t + x*t^2")
    bd = BoundaryData.interval(Series.zero(), parse_series("t^2"))
    got = boundary_correct(u, bd, (0.0, 1.0))
    assert series_equal(got, u, (0.0, 1.0), 1e-12)


def test_boundary_correct_preserves_initial_trace():
    # data compatible at t = 0, so the correction only moves mu > 0 terms
    u = parse_series("x + x^2*t^2")
    bd = BoundaryData.interval(Series.zero(), parse_series("1 + t^3"))
    got = boundary_correct(u, bd, (0.0, 1.0))
    assert equal_sampled(initial_value(got), initial_value(u), (0.0, 1.0))


def test_paper_literal_weights_match_on_unit_interval():
    u = parse_series("x^2*t^2 + 0.2*x^4*t^5")
    bd = BoundaryData.interval(Series.zero(), parse_series("t^2"))
    a = boundary_correct(u, bd, (0.0, 1.0), weights="normalized")
    b = boundary_correct(u, bd, (0.0, 1.0), weights="paper-literal")
    assert series_equal(a, b, (0.0, 1.0), 1e-12)


def test_paper_literal_weights_miss_on_wider_interval():
    # (1-x, x) blending only interpolates when the interval is [0,1]
    u = parse_series("x*(2 - x)*t + t^2")
    g1 = parse_series("t^2 + 1")
    bd = BoundaryData.interval(parse_series("t^2"), g1)
    exact = boundary_correct(u, bd, (0.0, 2.0), weights="normalized")
    off = boundary_correct(u, bd, (0.0, 2.0), weights="paper-literal")
    d_exact = series_add(series_substitute(exact, "x", 2.0), series_scale(g1, -1.0))
    d_off = series_add(series_substitute(off, "x", 2.0), series_scale(g1, -1.0))
    assert d_exact.terms == ()
    assert not d_off.is_zero()


def test_boundary_correct_degenerate_domain():
    u = parse_series("x*t")
    bd = BoundaryData.interval(Series.zero(), Series.zero())
    with pytest.raises(DecompError):
        boundary_correct(u, bd, (1.0, 1.0))


def test_boundary_correct_unknown_weights():
    u = parse_series("x*t")
    bd = BoundaryData.interval(Series.zero(), Series.zero())
    with pytest.raises(DecompError):
        boundary_correct(u, bd, (0.0, 1.0), weights="hermite")


# ---------------------------------------------------------------------------
# Adomian and difference polynomials
# ---------------------------------------------------------------------------


def _small_series(rng):
    x = Var("x")
    return Series([(rng.choice([0.0, 0.5, 1.0, 2.0]),
                    rng.uniform(-1.5, 1.5) + rng.uniform(-1.5, 1.5) * x)])


def test_adomian_square_first_three():
    # N(u) = u^2: A_0 = u0^2, A_1 = 2 u0 u1, A_2 = u1^2 + 2 u0 u2
    rng = random.Random(2024)
    for _ in range(5):
        u0, u1, u2 = (_small_series(rng) for _ in range(3))
        a = adomian_polys(SQUARE, [u0, u1, u2])
        assert len(a) == 3
        assert series_equal(a[0], series_mul(u0, u0), tol=1e-11)
        assert series_equal(a[1], series_scale(series_mul(u0, u1), 2.0), tol=1e-11)
        want2 = series_add(series_mul(u1, u1),
                           series_scale(series_mul(u0, u2), 2.0))
        assert series_equal(a[2], want2, tol=1e-11)


def test_adomian_sum_matches_operator_on_partial_sum():
    # with the list padded by zeros past the top lambda-degree, the
    # polynomials are a complete regrouping of N(u0 + u1 + u2 + u3)
    rng = random.Random(515)
    us = [_small_series(rng) for _ in range(4)]
    padded = us + [Series.zero()] * 3
    a = adomian_polys(SQUARE, padded)
    total = Series.zero()
    for p in a:
        total = series_add(total, p)
    s = Series.zero()
    for u in us:
        s = series_add(s, u)
    assert series_equal(total, SQUARE.apply(s), tol=1e-10)


def test_nonlinear_degree_cap():
    with pytest.raises(DecompError):
        NonlinearOpSpec((NonlinearProduct(1.0, (NonlinearFactor(0, "x", 4),)),))


def test_jafari_telescoping():
    rng = random.Random(99)
    us = [_small_series(rng) for _ in range(4)]
    b = jafari_polys(SQUARE, us)
    assert len(b) == 4
    # B*_0 = N(u0)
    assert series_equal(b[0], SQUARE.apply(us[0]), tol=1e-11)
    # B*_1 = N(u0 + u1) - N(u0) = 2 u0 u1 + u1^2
    want1 = series_add(series_scale(series_mul(us[0], us[1]), 2.0),
                       series_mul(us[1], us[1]))
    assert series_equal(b[1], want1, tol=1e-11)
    # partial sums telescope exactly
    total = Series.zero()
    s = Series.zero()
    for k in range(4):
        total = series_add(total, b[k])
        s = series_add(s, us[k])
        assert series_equal(total, SQUARE.apply(s), tol=1e-10)


def test_jafari_needs_a_seed():
    with pytest.raises(DecompError):
        jafari_polys(SQUARE, [])


# ---------------------------------------------------------------------------
# ladm_solve
# ---------------------------------------------------------------------------


def test_ladm_seed_term():
    # u_0 = f + I^alpha h with f = 0 for the advection benchmark
    spec = builtin("p5", alpha=0.8)
    trace = ladm_solve(spec, 0)
    assert len(trace.records) == 1
    want = parse_series("t*sin(x) + t^(1 + alpha)*cos(x)/gamma(2 + alpha)", 0.8)
    assert series_equal(trace.records[0].u, want, (0.0, 3.141592653589793), 1e-10)


def test_ladm_record_count_and_validation():
    spec = builtin("p6", alpha=1.0)
    assert len(ladm_solve(spec, 3).records) == 4
    with pytest.raises(DecompError):
        ladm_solve(spec, -1)


# ---------------------------------------------------------------------------
# mldm_solve
# ---------------------------------------------------------------------------


def test_mldm_first_correction_and_iterate():
    # alpha = 1: u*_0 = x^2 t^2 + 0.2 t^5 (x^4 - x), and
    # u_1 = -I^1[(u*_0)^2] expanded by hand
    spec = builtin("p6", alpha=1.0)
    trace = mldm_solve(spec, 1)
    star0 = parse_series("x^2*t^2 + 0.2*t^5*(x^4 - x)")
    assert series_equal(trace.records[0].u_star, star0, (0.0, 1.0), 1e-12)
    u1 = parse_series(
        "-(x^4*t^5/5) - 0.05*t^8*(x^6 - x^3) - (0.04/11)*t^11*(x^8 - 2*x^5 + x^2)")
    assert series_equal(trace.records[1].u, u1, (0.0, 1.0), 1e-12)


def test_mldm_partial_sums_interpolate_boundary():
    spec = builtin("p6", alpha=0.75)
    trace = mldm_solve(spec, 3)
    g1 = spec.bd.g1
    for rec in trace.records:
        at0 = series_substitute(rec.partial_sum, "x", 0.0)
        at1 = series_substitute(rec.partial_sum, "x", 1.0)
        assert at0.terms == ()
        assert series_add(at1, series_scale(g1, -1.0)).terms == ()


def test_mldm_reduces_to_ladm_without_boundary_defect():
    # a problem whose uncorrected iterates already satisfy the data: the
    # correction must be the identity and the two methods coincide
    exact = parse_series("(1 + t^2)*sin(pi*x)")
    f = parse_spatial("sin(pi*x)")
    h = parse_series("2*t*sin(pi*x)")
    bd = BoundaryData.interval(Series.zero(), Series.zero())
    spec = ProblemSpec(
        pid="toy", title="identity correction", dimension=1,
        domain=(0.0, 1.0), domain_y=None, alpha=1.0, mode="manufactured",
        f=f, bd=bd, linear=LinearOpSpec(), nonlinear=None, h=h, exact=exact)
    a = ladm_solve(spec, 2)
    b = mldm_solve(spec, 2)
    for ra, rb in zip(a.records, b.records):
        assert series_equal(ra.u, rb.u, (0.0, 1.0), 1e-12)
    assert series_equal(a.records[-1].partial_sum, b.records[-1].partial_sum,
                        (0.0, 1.0), 1e-12)


def test_mldm_needs_boundary_data():
    spec = builtin("p6", alpha=1.0)
    spec = dataclasses.replace(spec, bd=None)
    with pytest.raises(DecompError):
        mldm_solve(spec, 1)


def test_mldm_2d_faces_exact():
    dom = ((0.0, 2.0), (0.0, 2.0))
    for alpha in (0.7, 1.0):
        spec = builtin("p2", alpha=alpha)
        trace = mldm_solve(spec, 1)
        approx = trace.approximation
        for var, val, face in (("x", 0.0, spec.bd.gx0), ("x", 2.0, spec.bd.gx1),
                               ("y", 0.0, spec.bd.gy0), ("y", 2.0, spec.bd.gy1)):
            got = series_substitute(approx, var, val)
            assert series_equal(got, face, dom, 1e-11), (alpha, var, val)


def test_mldm_2d_reversed_correction_order():
    spec = builtin("p2", alpha=1.0)
    trace = mldm_solve(spec, 1, correction_order=("y", "x"))
    assert trace.correction_order == ("y", "x")
    dom = ((0.0, 2.0), (0.0, 2.0))
    for var, val, face in (("x", 0.0, spec.bd.gx0), ("x", 2.0, spec.bd.gx1),
                           ("y", 0.0, spec.bd.gy0), ("y", 2.0, spec.bd.gy1)):
        got = series_substitute(trace.approximation, var, val)
        assert series_equal(got, face, dom, 1e-11), (var, val)


def test_mldm_2d_corner_incompatibility():
    spec = builtin("p2", alpha=1.0)
    bad = BoundaryData.box(spec.bd.gx0, spec.bd.gx1, spec.bd.gy0,
                           series_add(spec.bd.gy1, Series.of(0.0, 1.0)))
    spec = dataclasses.replace(spec, bd=bad)
    with pytest.raises(DecompError):
        mldm_solve(spec, 1)
