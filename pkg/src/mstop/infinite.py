"""Infinite-rights limit of the refracted multiple stopping problem.

With unlimited exercise rights the problem reduces to a single stopping
problem at the stiffer discount r + lam whose value V-hat admits a Riesz
representation with an explicit density sigma; the value of the original
problem is then V_inf = R_r sigma.  For the call payoff everything is in
closed form: the auxiliary threshold is x_hat = beta K / (beta - 1) and
V_inf is c1 x + c2 + c3 x^a above x_hat and c4 x^b below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from mstop.model import Exponents, GbmModel, derive_exponents, require_valid
from mstop.powerfn import (
    PiecewisePowerSum,
    PowerTerm,
    call_payoff,
    combine,
    resolvent_apply,
)

# Relative tolerance for reconciling the algebraic resolvent against the
# closed-form coefficients; a mismatch signals an implementation bug.
COEFF_RECONCILE_TOL = 1e-9


@dataclass(frozen=True)
class InfiniteSolution:
    """Closed-form solution of the infinite-rights problem."""

    model: GbmModel
    exponents: Exponents
    x_hat_inf: float
    sigma_density: PiecewisePowerSum
    v_inf: PiecewisePowerSum
    v_hat: PiecewisePowerSum
    c1: float
    c2: float
    c3: float
    c4: float


@dataclass(frozen=True)
class VerificationReport:
    """Pointwise slack of v - g - lam * R_{r+lam} v on a grid."""

    grid: npt.NDArray[np.float64]
    slack: npt.NDArray[np.float64]
    ok: bool
    min_slack: float
    max_equality_error: float


def x_hat_infinite(model: GbmModel) -> float:
    """Threshold of the auxiliary (r + lam)-discounted stopping problem."""
    beta = derive_exponents(model).beta
    return beta / (beta - 1.0) * model.strike


def solve_auxiliary(model: GbmModel) -> tuple[float, PiecewisePowerSum]:
    """Auxiliary single stopping problem at discount r + lam.

    Returns (x_hat, v_hat) where v_hat is x - K above x_hat and
    ((x_hat - K) / x_hat^beta) x^beta below.
    """
    require_valid(model)
    exps = derive_exponents(model)
    x_hat = exps.beta / (exps.beta - 1.0) * model.strike
    c_hat = (x_hat - model.strike) / x_hat**exps.beta
    v_hat = PiecewisePowerSum(
        (x_hat,),
        (
            (PowerTerm(c_hat, exps.beta),),
            (PowerTerm(1.0, 1.0), PowerTerm(-model.strike, 0.0)),
        ),
    )
    return x_hat, v_hat


def riesz_density(model: GbmModel, x_hat: float) -> PiecewisePowerSum:
    """Representing density of v_hat: (r + lam - mu) x - K (r + lam) above
    x_hat, zero below."""
    require_valid(model)
    rl = model.r + model.lam
    return PiecewisePowerSum(
        (x_hat,),
        ((), (PowerTerm(rl - model.mu, 1.0), PowerTerm(-model.strike * rl, 0.0))),
    )


def _closed_form_coeffs(
    model: GbmModel, exps: Exponents, x_hat: float
) -> tuple[float, float, float, float]:
    # One-sided integrals of psi_r/phi_r against the density and the speed
    # measure evaluate to F(x_hat, p) below; the homogeneous coefficients of
    # R_r sigma follow.
    s2 = model.sigma * model.sigma
    rl = model.r + model.lam

    def integral_tail(p: float) -> float:
        q1 = p + 2.0 * model.mu / s2
        q2 = q1 - 1.0
        return (2.0 / s2) * (
            (rl - model.mu) * x_hat**q1 / q1 - model.strike * rl * x_hat**q2 / q2
        )

    c1 = (rl - model.mu) / (model.r - model.mu)
    c2 = -model.strike * rl / model.r
    c3 = -integral_tail(exps.b) / exps.wronskian_r
    c4 = -integral_tail(exps.a) / exps.wronskian_r
    return c1, c2, c3, c4


def solve_infinite(model: GbmModel) -> InfiniteSolution:
    """Full infinite-rights solution with closed-form/algebraic reconciliation.

    The value function is computed twice — through the exact resolvent
    algebra and through the printed coefficient formulas — and the two are
    required to agree to COEFF_RECONCILE_TOL relative on every coefficient,
    making each path a regression oracle for the other.
    """
    require_valid(model)
    exps = derive_exponents(model)
    x_hat, v_hat = solve_auxiliary(model)
    density = riesz_density(model, x_hat)
    v_inf = resolvent_apply(density, model.r, model)

    c1, c2, c3, c4 = _closed_form_coeffs(model, exps, x_hat)
    expected = {
        0: {(exps.b, 0): c4},
        1: {(1.0, 0): c1, (0.0, 0): c2, (exps.a, 0): c3},
    }
    for j, exp_terms in expected.items():
        got = v_inf.term_maps()[j]
        for key, want in exp_terms.items():
            have = None
            for (p, k), c in got.items():
                if k == key[1] and abs(p - key[0]) < 1e-9:
                    have = c
                    break
            if have is None or abs(have - want) > COEFF_RECONCILE_TOL * max(
                1.0, abs(want)
            ):
                raise ArithmeticError(
                    f"algebraic resolvent disagrees with closed form on piece "
                    f"{j}, exponent {key[0]}: {have} vs {want}"
                )
    return InfiniteSolution(
        model=model,
        exponents=exps,
        x_hat_inf=x_hat,
        sigma_density=density,
        v_inf=v_inf,
        v_hat=v_hat,
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
    )


def check_verification(
    v: PiecewisePowerSum,
    model: GbmModel,
    grid: npt.NDArray[np.float64],
    equality_from: float | None = None,
) -> VerificationReport:
    """Check the excessivity inequality v >= g + lam R_{r+lam} v on a grid.

    Equality (to 1e-8) is required at grid points >= equality_from when
    given; any slack below -1e-9 fails the report.
    """
    grid = np.asarray(grid, dtype=float)
    g = call_payoff(model.strike)
    rv = resolvent_apply(v, model.r + model.lam, model)
    rhs = combine(g, rv, 1.0, model.lam)
    slack = v.evaluate_many(grid) - rhs.evaluate_many(grid)
    min_slack = float(slack.min()) if slack.size else 0.0
    ok = min_slack >= -1e-9
    max_eq = 0.0
    if equality_from is not None:
        on_stop = grid >= equality_from
        if np.any(on_stop):
            max_eq = float(np.abs(slack[on_stop]).max())
            ok = ok and max_eq <= 1e-8
    return VerificationReport(
        grid=grid, slack=slack, ok=ok, min_slack=min_slack, max_equality_error=max_eq
    )
