"""Exact function algebra on piecewise sums of power terms.

Functions are represented as sums of c * x^p * (ln x)^k on intervals of
(0, inf).  The universe is closed under linear combination, under the
derivative of f(x)/x^p, and under the resolvent operator of geometric
Brownian motion; all three are computed in closed form with no
discretization.  Log powers (k >= 1) arise whenever the resolvent is applied
at a discount q to an input containing the exponent p with theta(p) = q
(a resonant term); the recursion of the finite solver produces such terms
from the third exercise right onward, so they are first-class citizens here.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import numpy.typing as npt

from mstop.model import GbmModel, root_pair

# Exponents within this absolute tolerance are considered equal when
# canonicalizing a piece; the same tolerance triggers the logarithmic
# antiderivative branch for power integrals with exponent near -1.
EXPONENT_MERGE_TOL = 1e-12
# Coefficients below this magnitude are dropped.
COEF_DROP_TOL = 1e-300

# A term map sends (exponent, log_power) to a coefficient.  All internal
# algebra works on these; PowerTerm tuples are the frozen public surface.
TermMap = dict[tuple[float, int], float]


class DivergenceError(ValueError):
    """An operator integral diverges for the given input."""


@dataclass(frozen=True)
class PowerTerm:
    """A single term c * x^exponent * (ln x)^log_power."""

    coef: float
    exponent: float
    log_power: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.coef) and math.isfinite(self.exponent)):
            raise ValueError(f"non-finite term ({self.coef}, {self.exponent})")
        if self.log_power < 0:
            raise ValueError(f"log_power must be >= 0, got {self.log_power}")


def _canonical_terms(terms: Iterable[PowerTerm]) -> tuple[PowerTerm, ...]:
    # Merge exponents that agree within tolerance (same log power), sort,
    # and drop negligible coefficients.  Merging is load-bearing: repeated
    # resolvent applications reproduce the same mathematical exponent along
    # different floating-point paths, and near-duplicate keys later shifted
    # by a common offset can collide and corrupt coefficient bookkeeping.
    merged: TermMap = {}
    for t in sorted(terms, key=lambda t: (t.exponent, t.log_power)):
        key = (t.exponent, t.log_power)
        for (p, k) in merged:
            if k == t.log_power and abs(p - t.exponent) <= EXPONENT_MERGE_TOL:
                key = (p, k)
                break
        merged[key] = merged.get(key, 0.0) + t.coef
    return tuple(
        PowerTerm(c, p, k)
        for (p, k), c in sorted(merged.items())
        if abs(c) > COEF_DROP_TOL
    )


@dataclass(frozen=True)
class PiecewisePowerSum:
    """Piecewise power-log sum on (0, inf) with right-closed intervals.

    Pieces cover (0, x_1], (x_1, x_2], ..., (x_m, inf); construction
    canonicalizes every piece.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[PowerTerm, ...], ...]

    def __post_init__(self) -> None:
        bps = tuple(float(x) for x in self.breakpoints)
        if any(x <= 0.0 or not math.isfinite(x) for x in bps):
            raise ValueError(f"breakpoints must be positive finite: {bps}")
        if any(x1 >= x2 for x1, x2 in zip(bps, bps[1:])):
            raise ValueError(f"breakpoints must be strictly increasing: {bps}")
        if len(self.pieces) != len(bps) + 1:
            raise ValueError(
                f"expected {len(bps) + 1} pieces for {len(bps)} breakpoints, "
                f"got {len(self.pieces)}"
            )
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(
            self, "pieces", tuple(_canonical_terms(p) for p in self.pieces)
        )

    # -- evaluation ---------------------------------------------------------

    def piece_index(self, x: float) -> int:
        return bisect_left(self.breakpoints, x)

    def __call__(self, x: float) -> float:
        if x <= 0.0:
            raise ValueError(f"x must be positive, got {x}")
        lx = math.log(x)
        return sum(
            t.coef * x**t.exponent * lx**t.log_power
            for t in self.pieces[self.piece_index(x)]
        )

    def evaluate_many(self, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        """Vectorized evaluation on an array of positive points."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0):
            raise ValueError("all evaluation points must be positive")
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="left")
        out = np.zeros_like(x)
        lx = np.log(x)
        for j, terms in enumerate(self.pieces):
            mask = idx == j
            if not np.any(mask):
                continue
            xm, lm = x[mask], lx[mask]
            acc = np.zeros_like(xm)
            for t in terms:
                acc += t.coef * xm**t.exponent * lm**t.log_power
            out[mask] = acc
        return out

    # -- structure ----------------------------------------------------------

    def term_maps(self) -> list[TermMap]:
        return [{(t.exponent, t.log_power): t.coef for t in p} for p in self.pieces]

    def has_log_terms(self) -> bool:
        return any(t.log_power > 0 for p in self.pieces for t in p)

    def is_zero(self) -> bool:
        return all(len(p) == 0 for p in self.pieces)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [
                [
                    {"coef": t.coef, "exp": t.exponent}
                    if t.log_power == 0
                    else {"coef": t.coef, "exp": t.exponent, "logpow": t.log_power}
                    for t in piece
                ]
                for piece in self.pieces
            ],
        }

    @staticmethod
    def from_json_dict(data: Mapping) -> "PiecewisePowerSum":
        return PiecewisePowerSum(
            tuple(data["breakpoints"]),
            tuple(
                tuple(
                    PowerTerm(d["coef"], d["exp"], int(d.get("logpow", 0)))
                    for d in piece
                )
                for piece in data["pieces"]
            ),
        )


def from_maps(
    breakpoints: Iterable[float], maps: Iterable[TermMap]
) -> PiecewisePowerSum:
    """Build a PiecewisePowerSum from raw term maps (internal algebra form)."""
    return PiecewisePowerSum(
        tuple(breakpoints),
        tuple(
            tuple(PowerTerm(c, p, k) for (p, k), c in m.items()) for m in maps
        ),
    )


def zero() -> PiecewisePowerSum:
    return PiecewisePowerSum((), ((),))


def constant(c: float) -> PiecewisePowerSum:
    return PiecewisePowerSum((), ((PowerTerm(c, 0.0),),))


def monomial(coef: float, exponent: float) -> PiecewisePowerSum:
    return PiecewisePowerSum((), ((PowerTerm(coef, exponent),),))


def call_payoff(strike: float) -> PiecewisePowerSum:
    """(x - K)^+ as a two-piece power sum."""
    return PiecewisePowerSum(
        (strike,), ((), (PowerTerm(1.0, 1.0), PowerTerm(-strike, 0.0)))
    )


# -- term-map algebra ---------------------------------------------------------


def _map_add(dst: TermMap, src: Mapping[tuple[float, int], float], scale: float) -> None:
    for key, c in src.items():
        dst[key] = dst.get(key, 0.0) + scale * c


def _map_shift(terms: Mapping[tuple[float, int], float], dp: float) -> TermMap:
    # Accumulate on collision: distinct keys can map to the same float after
    # the shift.
    out: TermMap = {}
    for (p, k), c in terms.items():
        key = (p + dp, k)
        out[key] = out.get(key, 0.0) + c
    return out


def _map_eval(terms: Mapping[tuple[float, int], float], x: float) -> float:
    lx = math.log(x)
    return sum(c * x**p * lx**k for (p, k), c in terms.items())


def antiderivative_map(terms: Mapping[tuple[float, int], float]) -> TermMap:
    """Exact antiderivative of a power-log term map.

    For p != -1:  int x^p ln^k dx =
        x^{p+1} * sum_{j=0}^{k} (-1)^j k!/(k-j)! ln^{k-j} x / (p+1)^{j+1}.
    For p == -1 (within tolerance): int x^{-1} ln^k dx = ln^{k+1} x / (k+1).
    """
    out: TermMap = {}
    for (p, k), c in terms.items():
        if abs(p + 1.0) < EXPONENT_MERGE_TOL:
            key = (0.0, k + 1)
            out[key] = out.get(key, 0.0) + c / (k + 1)
        else:
            fact = 1.0
            for j in range(k + 1):
                if j > 0:
                    fact *= k - j + 1
                key = (p + 1.0, k - j)
                out[key] = out.get(key, 0.0) + c * (-1.0) ** j * fact / (p + 1.0) ** (
                    j + 1
                )
    return out


def definite_integral(
    terms: Mapping[tuple[float, int], float], lo: float, hi: float
) -> float:
    """Integral of a term map over (lo, hi]; hi may be math.inf when every
    antiderivative term vanishes there (strictly negative exponents)."""
    anti = antiderivative_map(terms)
    if math.isinf(hi):
        if any(p >= 0.0 and abs(c) > 0.0 for (p, k), c in anti.items()):
            raise DivergenceError(
                f"integral to infinity diverges; antiderivative exponents "
                f"{sorted(p for (p, _k) in anti)}"
            )
        upper = 0.0
    else:
        upper = _map_eval(anti, hi)
    return upper - _map_eval(anti, lo)


# -- public operations --------------------------------------------------------


def combine(
    f: PiecewisePowerSum,
    g: PiecewisePowerSum,
    cf: float = 1.0,
    cg: float = 1.0,
) -> PiecewisePowerSum:
    """Exact cf*f + cg*g with merged breakpoints."""
    bps = sorted(set(f.breakpoints) | set(g.breakpoints))
    fmaps, gmaps = f.term_maps(), g.term_maps()
    maps: list[TermMap] = []
    for j in range(len(bps) + 1):
        # Right-closed intervals: the closing endpoint identifies the source
        # piece; the unbounded last interval probes with +inf.
        probe = bps[j] if j < len(bps) else math.inf
        m: TermMap = {}
        _map_add(m, fmaps[bisect_left(f.breakpoints, probe)], cf)
        _map_add(m, gmaps[bisect_left(g.breakpoints, probe)], cg)
        maps.append(m)
    return from_maps(bps, maps)


def scale(f: PiecewisePowerSum, c: float) -> PiecewisePowerSum:
    return combine(f, zero(), c, 0.0)


def ratio_derivative(f: PiecewisePowerSum, p: float) -> PiecewisePowerSum:
    """Exact derivative of x -> f(x) / x^p.

    Term c x^q ln^k maps to c(q-p) x^{q-p-1} ln^k + c k x^{q-p-1} ln^{k-1}.
    """
    maps: list[TermMap] = []
    for piece in f.term_maps():
        m: TermMap = {}
        for (q, k), c in piece.items():
            key = (q - p - 1.0, k)
            m[key] = m.get(key, 0.0) + c * (q - p)
            if k > 0:
                key2 = (q - p - 1.0, k - 1)
                m[key2] = m.get(key2, 0.0) + c * k
        maps.append(m)
    return from_maps(f.breakpoints, maps)


def derivative(f: PiecewisePowerSum) -> PiecewisePowerSum:
    """Exact derivative f'(x) (ratio derivative with p = 0)."""
    return ratio_derivative(f, 0.0)


def generator_apply(f: PiecewisePowerSum, model: GbmModel) -> PiecewisePowerSum:
    """Infinitesimal generator A f = sigma^2 x^2 f''/2 + mu x f' piecewise.

    On power-log terms:
        A(x^p ln^k) = theta(p) x^p ln^k
                      + (sigma^2 (2p-1)/2 + mu) k x^p ln^{k-1}
                      + sigma^2/2 k(k-1) x^p ln^{k-2}.
    """
    s2 = model.sigma * model.sigma
    maps: list[TermMap] = []
    for piece in f.term_maps():
        m: TermMap = {}
        for (p, k), c in piece.items():
            m[(p, k)] = m.get((p, k), 0.0) + c * model.theta(p)
            if k >= 1:
                key = (p, k - 1)
                m[key] = m.get(key, 0.0) + c * k * (0.5 * s2 * (2 * p - 1) + model.mu)
            if k >= 2:
                key = (p, k - 2)
                m[key] = m.get(key, 0.0) + c * 0.5 * s2 * k * (k - 1)
        maps.append(m)
    return from_maps(f.breakpoints, maps)


def resolvent_apply(
    f: PiecewisePowerSum, q: float, model: GbmModel
) -> PiecewisePowerSum:
    """Exact resolvent R_q f of geometric Brownian motion.

    Uses the integral representation
        R_q f(x) = B_q^{-1} [ phi_q(x) int_0^x psi_q f m' dy
                              + psi_q(x) int_x^inf phi_q f m' dy ]
    with psi_q = x^{p_q}, phi_q = x^{m_q} (the positive/negative roots of
    theta(p) = q), m'(y) = (2/sigma^2) y^{2 mu/sigma^2 - 2} and
    B_q = p_q - m_q.  Every integrand is a power-log function, so each piece
    integrates in closed form; output breakpoints equal input breakpoints.
    Resonant input exponents (theta(p) = q) produce an extra log power
    instead of a pole.
    """
    pq, mq = root_pair(model, q)
    s2 = model.sigma * model.sigma
    b_q = pq - mq
    tm = 2.0 * model.mu / s2 - 2.0  # exponent of m'

    piece_maps = f.term_maps()
    m = len(f.breakpoints)
    lows = [0.0, *f.breakpoints]
    highs = [*f.breakpoints, math.inf]

    # Convergence of the two one-sided integrals.
    for (p, _k), c in piece_maps[0].items():
        if abs(c) > 0.0 and p - mq <= EXPONENT_MERGE_TOL:
            raise DivergenceError(
                f"lower integral diverges: leftmost exponent {p} <= {mq}"
            )
    for (p, _k), c in piece_maps[-1].items():
        if abs(c) > 0.0 and pq - p <= EXPONENT_MERGE_TOL:
            raise DivergenceError(
                f"upper integral diverges: rightmost exponent {p} >= {pq}"
            )

    # Antiderivatives of psi_q f m' and phi_q f m' per piece.
    f1 = [
        antiderivative_map(_map_shift({k: 2.0 / s2 * v for k, v in pm.items()}, pq + tm))
        for pm in piece_maps
    ]
    f2 = [
        antiderivative_map(_map_shift({k: 2.0 / s2 * v for k, v in pm.items()}, mq + tm))
        for pm in piece_maps
    ]

    # Definite piece integrals of phi_q f m' (for the suffix sums feeding the
    # psi coefficients); the j = 0 lower endpoint is the limit at 0, which
    # exists by the convergence check but is only needed for j >= 1.
    phi_int = [
        (0.0 if highs[j] == math.inf else _map_eval(f2[j], highs[j]))
        - _map_eval(f2[j], lows[j])
        for j in range(1, m + 1)
    ]
    suffix = [0.0] * (m + 2)
    for j in range(m - 1, -1, -1):
        suffix[j] = suffix[j + 1] + phi_int[j]  # phi_int[j] covers piece j+1

    out_maps: list[TermMap] = []
    prefix = 0.0  # running int_0^{lows[j]} psi_q f m' dy
    for j in range(m + 1):
        lo, hi = lows[j], highs[j]
        part: TermMap = {}
        _map_add(part, _map_shift(f1[j], mq), 1.0 / b_q)
        _map_add(part, _map_shift(f2[j], pq), -1.0 / b_q)
        c_phi = (prefix - (_map_eval(f1[j], lo) if lo > 0.0 else 0.0)) / b_q
        c_psi = (suffix[j] + (_map_eval(f2[j], hi) if hi != math.inf else 0.0)) / b_q
        part[(mq, 0)] = part.get((mq, 0), 0.0) + c_phi
        part[(pq, 0)] = part.get((pq, 0), 0.0) + c_psi
        out_maps.append(part)
        if hi != math.inf:
            prefix += _map_eval(f1[j], hi) - (
                _map_eval(f1[j], lo) if lo > 0.0 else 0.0
            )
    return from_maps(f.breakpoints, out_maps)
