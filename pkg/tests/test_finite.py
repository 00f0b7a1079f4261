import math

import numpy as np
import pytest

from mstop.finite import (
    check_ratio_monotonicity,
    continuation_value,
    delta,
    solve_ladder,
    solve_single,
    solve_threshold,
    x_star_single,
)
from mstop.infinite import solve_infinite, x_hat_infinite
from mstop.model import GbmModel, derive_exponents
from mstop.powerfn import call_payoff, monomial, ratio_derivative, zero

from conftest import ORACLE, REF_MODEL, random_valid_model


@pytest.fixture(scope="module")
def ladder5():
    return solve_ladder(REF_MODEL, 5)


# -- base case ------------------------------------------------------------------


def test_solve_single_threshold_and_value():
    x1, v1, h1 = solve_single(REF_MODEL)
    assert x1 == pytest.approx(ORACLE["x_star_1"], rel=1e-14)
    assert v1(2.0) == pytest.approx(ORACLE["v1_at_2"], rel=1e-12)
    assert h1(5.0) == 3.0 and h1(1.0) == 0.0


def test_solve_single_smooth_fit():
    x1, v1, _ = solve_single(REF_MODEL)
    h = 1e-7 * x1
    left = (v1(x1) - v1(x1 - h)) / h
    right = (v1(x1 + h) - v1(x1)) / h
    assert abs(left - right) <= 1e-6


def test_solve_single_requires_net_drift():
    with pytest.raises(ValueError):
        solve_single(GbmModel(mu=0.005, sigma=0.125, r=0.05, lam=0.1, strike=2.0))


# -- continuation value -----------------------------------------------------------


def test_continuation_of_zero_is_payoff():
    h1 = continuation_value(REF_MODEL, zero())
    g = call_payoff(REF_MODEL.strike)
    grid = np.geomspace(0.5, 10.0, 30)
    assert np.allclose(h1.evaluate_many(grid), g.evaluate_many(grid))


def test_continuation_leading_linear_coefficient():
    # The (r + lam)-resolvent of the linear term x carries coefficient
    # 1/(r + lam - mu), so the top-piece linear coefficient of H^2 is
    # 1 + lam/(r + lam - mu).
    _, v1, _ = solve_single(REF_MODEL)
    h2 = continuation_value(REF_MODEL, v1)
    top = h2.term_maps()[-1]
    linear = next(c for (p, k), c in top.items() if k == 0 and abs(p - 1.0) < 1e-9)
    expected = 1.0 + REF_MODEL.lam / (REF_MODEL.r + REF_MODEL.lam - REF_MODEL.mu)
    assert linear == pytest.approx(expected, rel=1e-12)


def test_continuation_continuous_at_previous_threshold():
    _, v1, _ = solve_single(REF_MODEL)
    h2 = continuation_value(REF_MODEL, v1)
    x1 = ORACLE["x_star_1"]
    assert abs(h2(x1 * (1 - 1e-13)) - h2(x1 * (1 + 1e-13))) <= 1e-9 * abs(h2(x1))


# -- delta and threshold ----------------------------------------------------------


def test_delta_values(ladder5):
    for got, want in zip(ladder5.deltas, ORACLE["deltas"]):
        assert got == pytest.approx(want, rel=1e-10)
    assert all(d < 0.0 for d in ladder5.deltas)


def test_delta_zero_for_pure_power():
    b = derive_exponents(REF_MODEL).b
    assert delta(REF_MODEL, monomial(1.0, b), 3.0) == 0.0


def test_solve_threshold_zero_delta_is_single():
    assert solve_threshold(REF_MODEL, 0.0) == x_star_single(REF_MODEL)


def test_solve_threshold_rejects_positive_delta():
    with pytest.raises(ValueError):
        solve_threshold(REF_MODEL, 0.01)


def test_solve_threshold_reports_missing_sign_change():
    # A Delta so negative that f < 0 on the whole bracket.
    with pytest.raises(ArithmeticError, match="sign change"):
        solve_threshold(REF_MODEL, -1.0)


# -- the ladder -------------------------------------------------------------------


def test_ladder_thresholds(ladder5):
    for got, want in zip(ladder5.thresholds, ORACLE["thresholds"]):
        assert got == pytest.approx(want, abs=5e-10)


def test_ladder_c_stars(ladder5):
    for got, want in zip(ladder5.c_stars, ORACLE["c_stars"]):
        assert got == pytest.approx(want, rel=1e-9)


def test_ladder_values_at_2(ladder5):
    assert ladder5.values[0](2.0) == pytest.approx(ORACLE["v1_at_2"], rel=1e-10)
    assert ladder5.values[2](2.0) == pytest.approx(ORACLE["v3_at_2"], rel=1e-10)
    assert ladder5.values[4](2.0) == pytest.approx(ORACLE["v5_at_2"], rel=1e-10)


def test_ladder_base_case_matches_single():
    one = solve_ladder(REF_MODEL, 1)
    x1, v1, _ = solve_single(REF_MODEL)
    assert one.thresholds == (x1,)
    assert one.values[0] == v1


def test_ladder_ordering(ladder5):
    xs = ladder5.thresholds
    x_hat = x_hat_infinite(REF_MODEL)
    assert all(x2 < x1 for x1, x2 in zip(xs, xs[1:]))
    assert xs[-1] > x_hat


def test_ladder_rejects_no_rights():
    with pytest.raises(ValueError):
        solve_ladder(REF_MODEL, 0)


def test_first_order_condition_independent(ladder5):
    # dH^i(x)/x^b must vanish at x*_i; recomputed through ratio_derivative,
    # not through the root residual.
    b = ladder5.exponents.b
    for h_i, x_i in zip(ladder5.h_funcs, ladder5.thresholds):
        d = ratio_derivative(h_i, b)
        scale = abs(h_i(x_i)) / x_i**b
        assert abs(d(x_i)) <= 1e-8 * max(1.0, scale)


def test_value_monotonicity_and_majorant(ladder5):
    g = call_payoff(REF_MODEL.strike)
    grid = np.geomspace(0.5, 15.0, 200)
    prev = None
    for v, h in zip(ladder5.values, ladder5.h_funcs):
        v_vals = v.evaluate_many(grid)
        assert np.all(v_vals - h.evaluate_many(grid) >= -1e-9)
        assert np.all(h.evaluate_many(grid) - g.evaluate_many(grid) >= -1e-9)
        if prev is not None:
            assert np.all(v_vals - prev >= -1e-9)
        prev = v_vals


def test_value_equals_h_above_threshold(ladder5):
    for v, h, x_i in zip(ladder5.values, ladder5.h_funcs, ladder5.thresholds):
        for x in (x_i * 1.001, x_i * 2.0, x_i * 7.0):
            assert v(x) == pytest.approx(h(x), rel=1e-12)


def test_superadditivity(ladder5):
    grid = np.geomspace(0.5, 15.0, 100)
    v1 = ladder5.values[0].evaluate_many(grid)
    v5 = ladder5.values[4].evaluate_many(grid)
    assert np.all(v5 <= 5.0 * v1 + 1e-9)


def test_infinite_dominates_finite(ladder5):
    v_inf = solve_infinite(REF_MODEL).v_inf
    grid = np.geomspace(0.5, 15.0, 200)
    top = ladder5.values[-1].evaluate_many(grid)
    assert np.all(v_inf.evaluate_many(grid) - top >= -1e-9)


def test_smooth_fit_observed(ladder5):
    # First-derivative continuity at each boundary; an observed property of
    # the construction, tested at a looser tolerance than value continuity.
    for v, x_i in zip(ladder5.values, ladder5.thresholds):
        h = 1e-7 * x_i
        left = (v(x_i) - v(x_i - h)) / h
        right = (v(x_i + h) - v(x_i)) / h
        assert abs(left - right) <= 1e-5 * max(1.0, abs(left))


def test_degenerate_lambda_thresholds():
    model = GbmModel(mu=0.008, sigma=0.125, r=0.05, lam=1e-8, strike=2.0)
    ladder = solve_ladder(model, 3)
    x1 = x_star_single(model)
    for x in ladder.thresholds:
        assert abs(x - x1) <= 1e-3


def test_randomized_ladder_invariants():
    rng = np.random.default_rng(7)
    for _ in range(5):
        model = random_valid_model(rng)
        ladder = solve_ladder(model, 4)
        xs = ladder.thresholds
        x_hat = x_hat_infinite(model)
        assert all(x2 < x1 for x1, x2 in zip(xs, xs[1:]))
        assert xs[-1] > x_hat
        assert all(d < 0.0 for d in ladder.deltas)


# -- ratio monotonicity -----------------------------------------------------------


def test_ratio_monotonicity_for_values(ladder5):
    for i in range(4):
        report = check_ratio_monotonicity(REF_MODEL, ladder5.values[i])
        assert report["nonincreasing"], report


def test_ratio_monotonicity_trivial_cases():
    report = check_ratio_monotonicity(REF_MODEL, zero())
    assert report["nonincreasing"]
    # x^b is discount-harmonic: the ratio is constant 1.
    b = derive_exponents(REF_MODEL).b
    report = check_ratio_monotonicity(REF_MODEL, monomial(1.0, b))
    assert report["nonincreasing"]
    assert np.allclose(report["ratio"], 1.0, rtol=1e-10)
