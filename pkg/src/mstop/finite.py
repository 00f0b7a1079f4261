"""Threshold ladder for N exercise rights.

The value functions obey the recursion V^i = least excessive majorant of
H^i = g + lam * R_{r+lam} V^{i-1}, and each V^i is a one-sided threshold
solution: V^i = H^i above x*_i and c*_i x^b below.  The threshold x*_i is
the unique root of the necessary condition

    f(x) = x - b (x - K) + Delta_{i-1} x^beta = 0

on (x_hat_inf, x*_1], where Delta_{i-1} < 0 is a closed-form integral of
the previous stage.  Everything except the one-dimensional root solve stays
in the exact power-log algebra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.optimize import brentq

from mstop.model import Exponents, GbmModel, derive_exponents, require_valid
from mstop.powerfn import (
    PiecewisePowerSum,
    PowerTerm,
    call_payoff,
    combine,
    definite_integral,
    from_maps,
    ratio_derivative,
    resolvent_apply,
)

ROOT_XTOL = 1e-10
BRACKET_EPS = 1e-12


@dataclass(frozen=True)
class ThresholdLadder:
    """Thresholds x*_1 > ... > x*_n with the associated value functions.

    thresholds[i-1] is the exercise boundary with i rights remaining;
    values[i-1] = V^i; h_funcs[i-1] = H^i; c_stars[i-1] = H^i(x*_i)/x*_i^b;
    deltas[i-2] = Delta_{i-1} for i >= 2.
    """

    model: GbmModel
    exponents: Exponents
    n: int
    thresholds: tuple[float, ...]
    c_stars: tuple[float, ...]
    values: tuple[PiecewisePowerSum, ...]
    h_funcs: tuple[PiecewisePowerSum, ...]
    deltas: tuple[float, ...]


def x_star_single(model: GbmModel) -> float:
    """Single-right optimal threshold b K / (b - 1)."""
    b = derive_exponents(model).b
    return b / (b - 1.0) * model.strike


def solve_single(
    model: GbmModel,
) -> tuple[float, PiecewisePowerSum, PiecewisePowerSum]:
    """Base case: classical perpetual call. Returns (x*_1, V^1, H^1)."""
    require_valid(model, require_positive_net_drift=True)
    b = derive_exponents(model).b
    x1 = b / (b - 1.0) * model.strike
    c1 = (x1 - model.strike) / x1**b
    v1 = PiecewisePowerSum(
        (x1,),
        ((PowerTerm(c1, b),), (PowerTerm(1.0, 1.0), PowerTerm(-model.strike, 0.0))),
    )
    return x1, v1, call_payoff(model.strike)


def continuation_value(
    model: GbmModel, v_prev: PiecewisePowerSum
) -> PiecewisePowerSum:
    """H^i = g + lam * R_{r+lam} V^{i-1} in the exact algebra."""
    g = call_payoff(model.strike)
    if v_prev.is_zero():
        return g
    return combine(g, resolvent_apply(v_prev, model.r + model.lam, model), 1.0, model.lam)


def delta(model: GbmModel, h_prev: PiecewisePowerSum, x_star_prev: float) -> float:
    """Delta = (kappa gamma / (kappa + gamma)) *
    int_{x*_prev}^inf y^{-kappa} d/dy(h_prev(y)/y^b) dy, in closed form.

    The tail converges because the dominant term of h_prev grows linearly,
    so the integrand decays like y^{-kappa - b} = y^{-beta} with beta > 1.
    """
    exps = derive_exponents(model)
    integrand = ratio_derivative(h_prev, exps.b)
    maps = integrand.term_maps()
    lows = [0.0, *integrand.breakpoints]
    highs = [*integrand.breakpoints, math.inf]
    total = 0.0
    for j, terms in enumerate(maps):
        lo, hi = max(lows[j], x_star_prev), highs[j]
        if hi != math.inf and hi <= x_star_prev:
            continue
        shifted = {(p - exps.kappa, k): c for (p, k), c in terms.items()}
        total += definite_integral(shifted, lo, hi)
    value = total * exps.kappa * exps.gamma / (exps.kappa + exps.gamma)
    if value >= 0.0 and abs(value) > 0.0:
        raise ArithmeticError(f"Delta must be negative, got {value}")
    return value


def solve_threshold(model: GbmModel, delta_value: float) -> float:
    """Unique root of f(x) = x - b(x - K) + Delta x^beta on (x_hat, x*_1].

    Bracketed safeguarded root finding (Brent) to absolute tolerance 1e-10;
    a strict sign change across the bracket is asserted first.
    """
    if delta_value > 0.0:
        raise ValueError(f"delta must be <= 0, got {delta_value}")
    exps = derive_exponents(model)
    b, beta = exps.b, exps.beta
    k = model.strike
    x_hat = beta / (beta - 1.0) * k
    x1 = b / (b - 1.0) * k

    def f(x: float) -> float:
        return x - b * (x - k) + delta_value * x**beta

    if delta_value == 0.0:
        return x1
    f_lo, f_hi = f(x_hat + BRACKET_EPS), f(x1)
    if f_hi >= 0.0:
        # f is strictly decreasing on the bracket; a nonnegative value at
        # the right end puts the root at (or beyond) x*_1.
        return x1
    if f_lo <= 0.0:
        if f_lo >= -1e-9:
            # Degenerate bracket (x_hat and x*_1 nearly coincide, e.g. for
            # tiny lam): f at the left end is zero up to float noise.
            return x_hat + BRACKET_EPS
        raise ArithmeticError(
            f"no sign change on bracket ({x_hat}, {x1}]: f={f_lo}, {f_hi}"
        )
    return float(brentq(f, x_hat + BRACKET_EPS, x1, xtol=ROOT_XTOL))


def solve_ladder(model: GbmModel, n: int) -> ThresholdLadder:
    """Full recursion for n >= 1 rights; all ladder invariants are asserted
    before returning."""
    if n < 1:
        raise ValueError(f"number of rights must be >= 1, got {n}")
    require_valid(model, require_positive_net_drift=True)
    exps = derive_exponents(model)
    b, beta = exps.b, exps.beta
    x_hat = beta / (beta - 1.0) * model.strike

    x1, v1, h1 = solve_single(model)
    thresholds = [x1]
    c_stars = [(x1 - model.strike) / x1**b]
    values = [v1]
    h_funcs = [h1]
    deltas: list[float] = []

    for i in range(2, n + 1):
        d = delta(model, h_funcs[-1], thresholds[-1])
        deltas.append(d)
        h_i = continuation_value(model, values[-1])
        x_i = solve_threshold(model, d)
        c_i = h_i(x_i) / x_i**b
        below = PiecewisePowerSum((x_i,), ((PowerTerm(c_i, b),), ()))
        above = _truncate_below(h_i, x_i)
        v_i = combine(below, above)
        thresholds.append(x_i)
        c_stars.append(c_i)
        values.append(v_i)
        h_funcs.append(h_i)

    ladder = ThresholdLadder(
        model=model,
        exponents=exps,
        n=n,
        thresholds=tuple(thresholds),
        c_stars=tuple(c_stars),
        values=tuple(values),
        h_funcs=tuple(h_funcs),
        deltas=tuple(deltas),
    )
    _assert_invariants(ladder, x_hat)
    return ladder


def _truncate_below(f: PiecewisePowerSum, cut: float) -> PiecewisePowerSum:
    """f on (cut, inf), zero on (0, cut]; cut becomes the first breakpoint."""
    maps = f.term_maps()
    bps = [cut] + [x for x in f.breakpoints if x > cut]
    pieces: list[dict] = [{}]
    lows = [0.0, *f.breakpoints]
    highs = [*f.breakpoints, math.inf]
    for j in range(len(maps)):
        if highs[j] != math.inf and highs[j] <= cut:
            continue
        pieces.append(maps[j])
    return from_maps(bps, pieces)


def _assert_invariants(ladder: ThresholdLadder, x_hat: float) -> None:
    xs = ladder.thresholds
    for i in range(1, len(xs)):
        # Nonincreasing up to relative float noise: for tiny lam the whole
        # bracket (x_hat, x*_1] collapses and successive roots coincide at
        # double precision, so ties are legitimate there.
        if not (xs[i] < xs[i - 1] * (1.0 + 1e-12)):
            raise ArithmeticError(f"threshold monotonicity violated at i={i + 1}")
        if not (xs[i] > x_hat):
            raise ArithmeticError(f"threshold {i + 1} below infinite limit {x_hat}")
    for i, d in enumerate(ladder.deltas):
        if not (d < 0.0):
            raise ArithmeticError(f"Delta_{i + 1} not negative: {d}")
    # Pointwise checks on a log grid: value continuity at the boundary,
    # value monotonicity in rights, and the majorant chain V >= H >= g.
    grid = np.geomspace(0.2 * x_hat, 5.0 * xs[0], 101)
    g = call_payoff(ladder.model.strike)
    prev_vals: npt.NDArray[np.float64] | None = None
    for i, (v, h, x_i) in enumerate(
        zip(ladder.values, ladder.h_funcs, xs), start=1
    ):
        if abs(v(x_i * (1 - 1e-12)) - v(x_i * (1 + 1e-12))) > 1e-8 * max(
            1.0, abs(v(x_i))
        ):
            raise ArithmeticError(f"V^{i} discontinuous at its threshold")
        v_vals = v.evaluate_many(grid)
        h_vals = h.evaluate_many(grid)
        g_vals = g.evaluate_many(grid)
        if np.any(v_vals - h_vals < -1e-9) or np.any(h_vals - g_vals < -1e-9):
            raise ArithmeticError(f"majorant property violated at i={i}")
        if prev_vals is not None and np.any(v_vals - prev_vals < -1e-9):
            raise ArithmeticError(f"value monotonicity violated at i={i}")
        prev_vals = v_vals
        # Smooth fit at the boundary is expected but not guaranteed by the
        # construction for i >= 2; degrade to a warning.
        dv = _num_derivative_jump(v, x_i)
        if abs(dv) > 1e-6 * max(1.0, abs(v(x_i))):
            warnings.warn(
                f"first-derivative mismatch {dv:.3e} at threshold {i}",
                RuntimeWarning,
                stacklevel=2,
            )


def _num_derivative_jump(f: PiecewisePowerSum, x: float) -> float:
    h = 1e-7 * x
    left = (f(x) - f(x - h)) / h
    right = (f(x + h) - f(x)) / h
    return right - left


def check_ratio_monotonicity(
    model: GbmModel, v_prev: PiecewisePowerSum, n_points: int = 500
) -> dict:
    """Check that x -> lam (R_{r+lam} v_prev)(x) / x^b is nonincreasing.

    Scans a log grid spanning [x_hat/10, 10 x*_1]; returns a report dict
    with the worst increase and its location.
    """
    exps = derive_exponents(model)
    x_hat = exps.beta / (exps.beta - 1.0) * model.strike
    x1 = exps.b / (exps.b - 1.0) * model.strike
    grid = np.geomspace(x_hat / 10.0, 10.0 * x1, n_points)
    if v_prev.is_zero():
        ratio = np.zeros_like(grid)
    else:
        rv = resolvent_apply(v_prev, model.r + model.lam, model)
        ratio = model.lam * rv.evaluate_many(grid) / grid**exps.b
    diffs = np.diff(ratio)
    scale_ = max(1.0, float(np.abs(ratio).max()) if ratio.size else 1.0)
    worst = float(diffs.max()) if diffs.size else 0.0
    idx = int(diffs.argmax()) if diffs.size else 0
    return {
        "nonincreasing": worst <= 1e-10 * scale_,
        "worst_increase": worst,
        "at_x": float(grid[idx]),
        "ratio": ratio,
        "grid": grid,
    }
