"""Numerical resolvent oracle, independent of the exact algebra.

Evaluates R_q f(x) by adaptive quadrature of the integral representation

    R_q f(x) = B_q^{-1} [ phi_q(x) int_0^x psi_q f m' dy
                          + psi_q(x) int_x^inf phi_q f m' dy ].

Integration is performed in log coordinates (y = e^u), where products of
power functions become exponentials — nearly polynomial over each block —
and both infinite ends are truncated with measured-slope exponential tail
bounds rather than fixed cutoffs.  This module shares no code with the
algebraic resolvent, so agreement between the two is a meaningful check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

from mstop.model import GbmModel, root_pair

# Width of one integration block in log coordinates.
_BLOCK_WIDTH = 2.0
# Hard cap on the number of blocks walked toward either infinite end.
_MAX_BLOCKS = 400


@dataclass(frozen=True)
class QuadSpec:
    """Adaptive-quadrature tolerances and limits."""

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_depth: int = 50

    def __post_init__(self) -> None:
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_depth < 10:
            raise ValueError(f"max_depth must be >= 10, got {self.max_depth}")


class QuadratureError(ArithmeticError):
    """Tolerance not reached or a divergent tail was detected."""


def _adaptive_simpson(
    g: Callable[[float], float],
    a: float,
    b: float,
    eps: float,
    max_depth: int,
) -> float:
    """Recursive adaptive Simpson with embedded-rule error estimation."""

    def simpson(lo: float, hi: float, flo: float, fmid: float, fhi: float) -> float:
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(
        lo: float,
        hi: float,
        flo: float,
        fmid: float,
        fhi: float,
        whole: float,
        eps_: float,
        depth: int,
    ) -> float:
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = g(lm), g(rm)
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        err = left + right - whole
        if abs(err) <= 15.0 * eps_:
            return left + right + err / 15.0
        if hi - lo <= 1e-13 * max(abs(lo), abs(hi), 1.0):
            # Width floor: a kink of the integrand (piece boundary) cannot
            # be subdivided away; the residual here is below double noise.
            return left + right + err / 15.0
        if depth >= max_depth:
            raise QuadratureError(
                f"tolerance not reached within depth {max_depth} on "
                f"[{lo}, {hi}] (err {abs(err):.3e})"
            )
        return recurse(lo, mid, flo, flm, fmid, left, 0.5 * eps_, depth + 1) + recurse(
            mid, hi, fmid, frm, fhi, right, 0.5 * eps_, depth + 1
        )

    fa, fm, fb = g(a), g(0.5 * (a + b)), g(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, eps, 0)


def _integrate_block(
    g: Callable[[float], float], a: float, b: float, spec: QuadSpec
) -> float:
    crude = abs((b - a) * g(0.5 * (a + b)))
    eps = max(spec.abs_tol, spec.rel_tol * crude)
    return _adaptive_simpson(g, a, b, eps, spec.max_depth)


def _walk_tail(
    g: Callable[[float], float],
    start: float,
    direction: float,
    spec: QuadSpec,
) -> float:
    """Integrate g from `start` toward +/- infinity in log-coordinate blocks.

    Stops when a measured-slope exponential majorant bounds the remaining
    tail below abs_tol; raises if the integrand does not decay.
    """
    total = 0.0
    u = start
    for _ in range(_MAX_BLOCKS):
        u_next = u + direction * _BLOCK_WIDTH
        a, b = min(u, u_next), max(u, u_next)
        try:
            total += _integrate_block(g, a, b, spec)
            g_in, g_out = abs(g(u)), abs(g(u_next))
        except OverflowError as exc:
            raise QuadratureError(
                f"divergent tail: integrand overflows near u={u_next}"
            ) from exc
        if g_out > g_in and g_out > 1e12:
            raise QuadratureError(
                f"divergent tail detected at u={u_next} (|g|={g_out:.3e})"
            )
        if g_out < g_in and g_out > 0.0:
            # |g| decays at measured rate s per unit u beyond u_next; the
            # remaining tail is bounded by g_out / s.
            s = math.log(g_in / g_out) / _BLOCK_WIDTH
            if g_out / s < spec.abs_tol:
                return total
        elif g_out == 0.0:
            # Identically-zero stretch (e.g. payoff region ends); probe one
            # more block, then accept.
            probe = abs(g(u_next + direction * _BLOCK_WIDTH))
            if probe == 0.0:
                return total
        u = u_next
    raise QuadratureError(
        f"tail did not converge within {_MAX_BLOCKS} blocks from u={start}"
    )


def quad_resolvent(
    f: Callable[[float], float],
    q: float,
    x: float,
    model: GbmModel,
    spec: QuadSpec | None = None,
) -> float:
    """Resolvent R_q f(x) by adaptive quadrature of the representation.

    `f` must be evaluatable on (0, inf) with power-bounded growth below the
    psi_q exponent at infinity and above the phi_q exponent at zero.
    """
    if x <= 0.0:
        raise ValueError(f"x must be positive, got {x}")
    if spec is None:
        spec = QuadSpec()
    pq, mq = root_pair(model, q)
    s2 = model.sigma * model.sigma
    tm = 2.0 * model.mu / s2 - 2.0
    b_q = pq - mq
    ux = math.log(x)

    def lower_integrand(u: float) -> float:
        # e^u (pq + tm + 1): psi_q * m' * Jacobian of y = e^u.
        return math.exp(u * (pq + tm + 1.0)) * (2.0 / s2) * f(math.exp(u))

    def upper_integrand(u: float) -> float:
        return math.exp(u * (mq + tm + 1.0)) * (2.0 / s2) * f(math.exp(u))

    # The two integrals are multiplied by x^mq / B_q and x^pq / B_q, which can
    # be large; tighten each walk's absolute tolerance by its prefactor so the
    # error budget applies to the final value, not the raw integral.
    w_lo, w_up = x**mq / b_q, x**pq / b_q
    spec_lo = replace(spec, abs_tol=spec.abs_tol / max(1.0, abs(w_lo)))
    spec_up = replace(spec, abs_tol=spec.abs_tol / max(1.0, abs(w_up)))
    lower = _walk_tail(lower_integrand, ux, -1.0, spec_lo)
    upper = _walk_tail(upper_integrand, ux, +1.0, spec_up)
    return w_lo * lower + w_up * upper
