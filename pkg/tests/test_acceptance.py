"""Acceptance gate: runs every self-verification check once and reports a
pass/fail line per criterion.

The convergence check is expected to fail as long as the oscillatory
nonlinear benchmark (p7) diverges on the default grid; see the verify
command's output for the measured error growth. The check is kept honest
rather than tuned around.
"""

import pytest

from fracdecomp import acceptance


@pytest.fixture(scope="module")
def results():
    out = acceptance.run_all()
    return {r.name: r for r in out}


def _show(results, name):
    r = results[name]
    print(r.line())
    return r


def test_gamma_probes(results):
    assert _show(results, "gamma").passed


def test_1_power_rule_vs_quadrature(results):
    assert _show(results, "power-rule").passed


def test_2_semigroup_and_inversion(results):
    assert _show(results, "semigroup").passed


def test_3_boundary_interpolation(results):
    assert _show(results, "boundary").passed


def test_4_telescoping_partial_sums(results):
    assert _show(results, "telescoping").passed


def test_5_adomian_grading(results):
    assert _show(results, "adomian").passed


def test_6_benchmark_transcription(results):
    assert _show(results, "transcription").passed


def test_7_convergence_trend(results):
    assert _show(results, "convergence").passed


def test_8_method_comparison(results):
    assert _show(results, "comparison").passed


def test_9_alpha_family_ordering(results):
    assert _show(results, "alpha-sweep").passed


def test_10_byte_determinism(results):
    assert _show(results, "determinism").passed


def test_all_checks_ran_within_budgets(results):
    assert set(results) == set(acceptance.all_check_names())
    for name, budget in acceptance._BUDGETS.items():
        assert results[name].seconds <= budget, (name, results[name].seconds)
