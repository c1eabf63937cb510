"""Tail and moment bounds for isotropic log-concave vectors, and empirical constant fitting.

Each bound is a formula ``rhs(t; C)`` asserted only inside an envelope
``t >= threshold(C)``.  The universal constants are unknown; :func:`fit_constant`
finds the smallest constant on a grid under which every in-envelope
measurement is certified by its upper confidence endpoint.

Logarithms are natural throughout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

__all__ = [
    "EnvelopeViolation",
    "EnvelopeEmpty",
    "FamilyId",
    "BoundFamily",
    "BoundCheck",
    "ConstantLedger",
    "DEFAULT_SEARCH_GRID",
    "paouris_rhs",
    "orderstat_envelope",
    "uncond_orderstat_rhs",
    "uncond_union_bound",
    "expconc_envelope",
    "expconc_orderstat_rhs",
    "main_orderstat_rhs",
    "estN_rhs",
    "envelope_threshold_estN",
    "estN_proof_conditions",
    "chebyshev_reduction",
    "lr_tail_small_rhs",
    "lr_tail_large_rhs",
    "linf_tail_rhs",
    "estlarger_rhs",
    "estlarger_envelope",
    "thm_larger_constant",
    "lr_moment_rhs",
    "cond1_rhs",
    "cond2_count_rhs",
    "norm_tail_from_estn_rhs",
    "fit_constant",
]

DEFAULT_SEARCH_GRID: tuple[float, ...] = tuple(0.25 * 2.0 ** (j / 4) for j in range(33))


class EnvelopeViolation(Exception):
    """A bound was evaluated outside the range of t where it is asserted."""


class EnvelopeEmpty(EnvelopeViolation):
    """No admissible t exists for the given parameters."""


def _require(cond: bool, msg: str):
    if not cond:
        raise EnvelopeViolation(msg)


# concentration of mass ----------------------------------------------------

def paouris_rhs(t: float, n: int, check: bool = True) -> float:
    """exp(-t sqrt(n)); the matching event is {|X| >= C t sqrt(n)}."""
    if check:
        _require(t >= 1, f"concentration of mass is asserted for t >= 1, got {t}")
    return math.exp(-t * math.sqrt(n))


# order statistics ---------------------------------------------------------

def orderstat_envelope(n: int, k: int, C: float) -> float:
    """C log(e n / k)."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return C * math.log(math.e * n / k)


def uncond_orderstat_rhs(n: int, k: int, t: float, C: float, check: bool = True) -> float:
    """exp(-k t / C) for unconditional vectors."""
    if check:
        _require(t >= orderstat_envelope(n, k, C), "t below C log(en/k)")
    return math.exp(-k * t / C)


def uncond_union_bound(n: int, k: int, t: float, C: float) -> float:
    """(2en/k)^k exp(-k t / C): the union-bound step before the envelope absorbs the prefactor."""
    return math.exp(k * math.log(2 * math.e * n / k) - k * t / C)


def expconc_envelope(n: int, k: int, alpha: float) -> float:
    """8 alpha log(e n / k)."""
    return 8.0 * orderstat_envelope(n, k, alpha)


def expconc_orderstat_rhs(n: int, k: int, t: float, alpha: float, check: bool = True) -> float:
    """exp(-sqrt(k) t / (3 alpha)) under exponential concentration with constant alpha >= 1."""
    if alpha < 1:
        raise ValueError("the concentration constant must be at least 1")
    if check:
        _require(t >= expconc_envelope(n, k, alpha), "t below 8 alpha log(en/k)")
    return math.exp(-math.sqrt(k) * t / (3.0 * alpha))


def main_orderstat_rhs(n: int, k: int, t: float, C: float, check: bool = True) -> float:
    """exp(-sqrt(k) t / C) for every isotropic log-concave vector."""
    if check:
        _require(t >= orderstat_envelope(n, k, C), "t below C log(en/k)")
    return math.exp(-math.sqrt(k) * t / C)


# moments of the exceedance process ----------------------------------------

def estN_rhs(p: float, C: float) -> float:
    """(C p)^(2p)."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return (C * p) ** (2 * p)


@dataclass(frozen=True)
class EstNEnvelope:
    t: float
    iterations: int
    method: str
    contraction: float
    residual: float


def envelope_threshold_estN(n: int, p: float, C: float, *, max_iter: int = 100,
                            rtol: float = 1e-10) -> EstNEnvelope:
    """Smallest t with t >= C log(n t^2 / p^2) for all larger t.

    This is the larger fixed point of g(t) = C log(n t^2 / p^2).  The iteration
    t <- g(t) starts at max(C log(n max(C,1)^2 / p^2), 2C); above 2C the map
    is a contraction with factor 2C/t.  If 100 iterations do not reach the
    relative tolerance the root is finished by bisection on the bracket the
    iteration produced, and ``method`` says so.  Raises :class:`EnvelopeEmpty`
    when there is no fixed point at or above 1.
    """
    if p < 1 or n < 1 or C <= 0:
        raise ValueError("need n >= 1, p >= 1 and C > 0")
    g = lambda t: C * math.log(n * t * t / (p * p))
    two_c = 2.0 * C
    if g(two_c) < two_c:
        raise EnvelopeEmpty(f"t >= C log(n t^2/p^2) has no fixed point (n={n}, p={p}, C={C})")
    t = max(C * math.log(n * max(C, 1.0) ** 2 / (p * p)), two_c)
    method = "iteration"
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        nxt = g(t)
        if abs(nxt - t) <= rtol * abs(nxt):
            t = nxt
            converged = True
            break
        t = nxt
    if not converged:
        hi = max(t, two_c)
        while g(hi) > hi:
            hi *= 2.0
        t = optimize.brentq(lambda s: g(s) - s, two_c, hi, xtol=1e-14, rtol=1e-15)
        method = "bracketed"
    residual = abs(t - g(t))
    if residual > 1e-8 * t:
        raise EnvelopeEmpty(f"fixed point iteration did not settle (residual {residual:.3g})")
    if t < 1:
        raise EnvelopeEmpty(f"fixed point {t:.4g} lies below 1")
    return EstNEnvelope(t, it, method, two_c / t, residual)


def estN_proof_conditions(n: int, p: float, t: float, C: float) -> dict[str, bool]:
    """Auxiliary conditions used inside the moment proof, reported as diagnostics only."""
    return {
        "t_sqrt_n_ge_10p": t * math.sqrt(n) >= 10 * p,
        "t2_n_exp_le_p2": t * t * n * math.exp(-t / C) <= p * p,
    }


def chebyshev_reduction(t: float, k: int, C: float) -> tuple[float, float, float]:
    """Choose p = t sqrt(k) / (e C); return (p, 2 (Cp/(t sqrt k))^{2p}, 2 e^{-2p})."""
    p = t * math.sqrt(k) / (math.e * C)
    lhs = 2.0 * (C * p / (t * math.sqrt(k))) ** (2 * p)
    return p, lhs, 2.0 * math.exp(-2.0 * p)


def norm_tail_from_estn_rhs(t: float, n: int, A1: float, C: float) -> float:
    """exp(-t sqrt(n) / (C A1)): norm deviation implied by uniform moment bounds on N_{UX}."""
    return math.exp(-t * math.sqrt(n) / (C * A1))


def norm_from_estn_envelope(A1: float, A2: float, C: float) -> float:
    return max(C * A1, A2)


# l_r norms ----------------------------------------------------------------

def lr_tail_small_rhs(t: float, n: int, r: float, C: float, check: bool = True) -> float:
    """exp(-t n^{1/2 - 1/r} / C) for r in [1, 2], t >= C n^{1/r}."""
    if not 1 <= r <= 2:
        raise ValueError("small-r bound needs r in [1, 2]")
    if check:
        _require(t >= C * n ** (1.0 / r), "t below C n^{1/r}")
    return math.exp(-t * n ** (0.5 - 1.0 / r) / C)


def lr_tail_large_rhs(t: float, n: int, r: float, C: float, check: bool = True) -> float:
    """exp(-t / C) for r >= 2, t >= C r n^{1/r}."""
    if r < 2:
        raise ValueError("large-r bound needs r >= 2")
    if check:
        _require(t >= C * r * n ** (1.0 / r), "t below C r n^{1/r}")
    return math.exp(-t / C)


def linf_tail_rhs(t: float, n: int, C: float, check: bool = True) -> float:
    """exp(-t / C) for the max norm, t >= C log n."""
    if check:
        _require(t >= C * math.log(n), "t below C log n")
    return math.exp(-t / C)


def estlarger_envelope(n: int, r: float, C: float) -> float:
    """C (r n^{1/r} + (r/(r-2))^{1/r} log n)."""
    if r <= 2:
        raise ValueError("needs r > 2")
    return C * (r * n ** (1.0 / r) + (r / (r - 2)) ** (1.0 / r) * math.log(n))


def estlarger_rhs(t: float, n: int, r: float, C: float, check: bool = True) -> float:
    """exp(-((r-2)/r)^{1/r} t / C) for r > 2."""
    if r <= 2:
        raise ValueError("needs r > 2")
    if check:
        _require(t >= estlarger_envelope(n, r, C), "t below the r > 2 envelope")
    return math.exp(-((r - 2) / r) ** (1.0 / r) * t / C)


def thm_larger_constant(delta: float, C: float = 1.0) -> float:
    """C delta^{-1/2}: how the constants grow for r >= 2 + delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return C * delta ** -0.5


def lr_moment_rhs(p: float, n: int, r: float, C: float, refined: bool = False) -> float:
    """Upper bound for (E ||X||_r^p)^{1/p}, p >= 2.

    r in [1,2]: C (n^{1/r} + n^{1/r - 1/2} p); r in [2, inf): C (r n^{1/r} + p);
    r = inf: C (log n + p).  ``refined`` (r > 2) gives
    C (r n^{1/r} + (r/(r-2))^{1/r} (log n + p)).
    """
    if p < 2:
        raise ValueError("moment bounds are stated for p >= 2")
    if math.isinf(r):
        return C * (math.log(n) + p)
    if refined:
        if r <= 2:
            raise ValueError("the refined bound needs r > 2")
        return C * (r * n ** (1.0 / r) + (r / (r - 2)) ** (1.0 / r) * (math.log(n) + p))
    if 1 <= r <= 2:
        return C * (n ** (1.0 / r) + n ** (1.0 / r - 0.5) * p)
    if r > 2:
        return C * (r * n ** (1.0 / r) + p)
    raise ValueError("r must be at least 1")


# conditioning on a convex set ---------------------------------------------

def cond1_rhs(pA: float, t: float, n: int, C: float, check: bool = True) -> float:
    """C P(A) (t^{-2} log^2 P(A) + n e^{-t/C}), for 0 < P(A) <= 1/e and t >= C."""
    if not 0 < pA <= 1:
        raise ValueError("P(A) must lie in (0, 1]")
    if check:
        _require(pA <= 1 / math.e, f"P(A) = {pA:.4g} exceeds 1/e")
        _require(t >= C, "t below C")
    lg = math.log(pA)
    return C * pA * (lg * lg / (t * t) + n * math.exp(-t / C))


def cond2_count_rhs(pA: float, t: float, u: float, C: float, check: bool = True) -> float:
    """C u^2 t^{-2} log^2 P(A): cap on coordinates with P(A, X_i >= t) >= e^{-u} P(A), 1 <= u <= t/C."""
    if not 0 < pA <= 1:
        raise ValueError("P(A) must lie in (0, 1]")
    if check:
        _require(pA <= 1 / math.e, f"P(A) = {pA:.4g} exceeds 1/e")
        _require(1 <= u <= t / C, "u outside [1, t/C]")
    lg = math.log(pA)
    return C * u * u * lg * lg / (t * t)


# families and fitting -----------------------------------------------------

class FamilyId(str, Enum):
    PAOURIS = "Paouris"
    UNCOND_ORDERSTAT = "UncondOrderStat"
    EXPCONC_ORDERSTAT = "ExpConcOrderStat"
    MAIN_ORDERSTAT = "MainOrderStat"
    ESTN_MOMENT = "EstNMoment"
    LR_TAIL_SMALL = "LrTailSmall"
    LR_TAIL_LARGE = "LrTailLarge"
    LINF_TAIL = "LinfTail"
    EST_LARGER = "EstLarger"
    COND1 = "Cond1"
    COND2 = "Cond2"
    LR_MOMENT_SMALL = "LrMomentSmall"
    LR_MOMENT_LARGE = "LrMomentLarge"
    LINF_MOMENT = "LinfMoment"


# which side of the inequality carries the fitted constant
_EVENT_SIDE = {FamilyId.PAOURIS}
# families whose "t" coordinate is the moment order p
_MOMENT_ORDER = {FamilyId.LR_MOMENT_SMALL, FamilyId.LR_MOMENT_LARGE, FamilyId.LINF_MOMENT}


@dataclass(frozen=True)
class BoundFamily:
    """One inequality with fixed parameters; cells may add or override parameters (k, r, p, ...)."""

    id: FamilyId
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "id", FamilyId(self.id))

    @property
    def constant_side(self) -> str:
        return "event" if self.id in _EVENT_SIDE else "rhs"

    def _p(self, extra) -> dict[str, Any]:
        merged = dict(self.params)
        if extra:
            merged.update(extra)
        return merged

    def threshold(self, C: float, **extra) -> float | None:
        """Smallest t at which the bound is asserted, or None if the envelope is empty."""
        q = self._p(extra)
        f = self.id
        n = q.get("n")
        if f is FamilyId.PAOURIS:
            return 1.0
        if f in (FamilyId.UNCOND_ORDERSTAT, FamilyId.MAIN_ORDERSTAT):
            return orderstat_envelope(n, q["k"], C)
        if f is FamilyId.EXPCONC_ORDERSTAT:
            return expconc_envelope(n, q["k"], C) if C >= 1 else None
        if f is FamilyId.ESTN_MOMENT:
            try:
                return envelope_threshold_estN(n, q["p"], C).t
            except EnvelopeEmpty:
                return None
        if f is FamilyId.LR_TAIL_SMALL:
            return C * n ** (1.0 / q["r"])
        if f is FamilyId.LR_TAIL_LARGE:
            return C * q["r"] * n ** (1.0 / q["r"])
        if f is FamilyId.LINF_TAIL:
            return C * math.log(n)
        if f is FamilyId.EST_LARGER:
            return estlarger_envelope(n, q["r"], C)
        if f is FamilyId.COND1:
            return C if 0 < q["pA"] <= 1 / math.e else None
        if f is FamilyId.COND2:
            return C * q["u"] if q["u"] >= 1 and 0 < q["pA"] <= 1 / math.e else None
        if f in _MOMENT_ORDER:
            return 2.0
        raise ValueError(f"unknown family {f}")

    def rhs(self, t: float, C: float, **extra) -> float:
        q = self._p(extra)
        f = self.id
        n = q.get("n")
        if f is FamilyId.PAOURIS:
            return paouris_rhs(t, n, check=False)
        if f is FamilyId.UNCOND_ORDERSTAT:
            return uncond_orderstat_rhs(n, q["k"], t, C, check=False)
        if f is FamilyId.EXPCONC_ORDERSTAT:
            return math.exp(-math.sqrt(q["k"]) * t / (3.0 * C))
        if f is FamilyId.MAIN_ORDERSTAT:
            return main_orderstat_rhs(n, q["k"], t, C, check=False)
        if f is FamilyId.ESTN_MOMENT:
            return estN_rhs(q["p"], C)
        if f is FamilyId.LR_TAIL_SMALL:
            return lr_tail_small_rhs(t, n, q["r"], C, check=False)
        if f is FamilyId.LR_TAIL_LARGE:
            return lr_tail_large_rhs(t, n, q["r"], C, check=False)
        if f is FamilyId.LINF_TAIL:
            return linf_tail_rhs(t, n, C, check=False)
        if f is FamilyId.EST_LARGER:
            return estlarger_rhs(t, n, q["r"], C, check=False)
        if f is FamilyId.COND1:
            return cond1_rhs(q["pA"], t, n, C, check=False)
        if f is FamilyId.COND2:
            return cond2_count_rhs(q["pA"], t, q["u"], C, check=False)
        if f is FamilyId.LR_MOMENT_SMALL:
            return lr_moment_rhs(t, n, q["r"], C)
        if f is FamilyId.LR_MOMENT_LARGE:
            return lr_moment_rhs(t, n, q["r"], C, refined=bool(q.get("refined", False)))
        if f is FamilyId.LINF_MOMENT:
            return lr_moment_rhs(t, n, math.inf, C)
        raise ValueError(f"unknown family {f}")

    def in_envelope(self, t: float, C: float, **extra) -> bool:
        thr = self.threshold(C, **extra)
        return thr is not None and t >= thr * (1 - 1e-12)


@dataclass(frozen=True)
class BoundCheck:
    """One grid cell: an empirical value with its interval, optionally evaluated against a bound.

    ``resolution`` is the smallest value the measurement could certify (the
    zero-count upper endpoint for a tail probability, 0 for exact values).
    """

    t: float
    empirical: float
    ci_low: float
    ci_high: float
    params: dict[str, Any] = field(default_factory=dict)
    resolution: float = 0.0
    count: int | None = None
    rhs: float | None = None
    in_envelope: bool | None = None
    status: str | None = None

    @classmethod
    def exact(cls, t: float, value: float, **params) -> BoundCheck:
        return cls(t, value, value, value, params)

    @classmethod
    def from_estimate(cls, t: float, est, **params) -> BoundCheck:
        res = getattr(est, "resolution", 0.0)
        return cls(t, est.point, est.ci_low, est.ci_high, params, res, getattr(est, "count", None))

    def to_dict(self) -> dict[str, Any]:
        d = {"t": self.t, **{k: v for k, v in sorted(self.params.items())},
             "empirical": self.empirical, "ci_low": self.ci_low, "ci_high": self.ci_high,
             "rhs": self.rhs, "in_envelope": self.in_envelope, "status": self.status}
        if self.count is not None:
            d["count"] = self.count
        return d


def evaluate_cell(family: BoundFamily, cell: BoundCheck, C: float) -> BoundCheck:
    """Classify a cell at constant C.

    ``unconstrained``: outside the envelope.  ``pass``: upper CI endpoint at
    most the bound.  ``unresolved``: the bound is below what the sample can
    certify and the data do not contradict it (lower endpoint at most the
    bound).  ``violation``: anything else.
    """
    inside = family.in_envelope(cell.t, C, **cell.params)
    rhs = family.rhs(cell.t, C, **cell.params)
    if not inside:
        status = "unconstrained"
    elif cell.ci_high <= rhs:
        status = "pass"
    elif rhs < cell.resolution and cell.ci_low <= rhs:
        status = "unresolved"
    else:
        status = "violation"
    return replace(cell, rhs=rhs, in_envelope=inside, status=status)


@dataclass
class ConstantLedger:
    family: BoundFamily
    fitted_C: float | None
    cells: list[BoundCheck]
    search_grid: list[float]
    violations: list[BoundCheck] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "fitted" if self.fitted_C is not None else "no qualifying C"

    @property
    def unconstrained(self) -> list[BoundCheck]:
        return [c for c in self.cells if c.status == "unconstrained"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.id.value,
            "params": dict(sorted(self.family.params.items())),
            "constant_side": self.family.constant_side,
            "fitted_C": self.fitted_C,
            "status": self.status,
            "search_grid": list(self.search_grid),
            "meta": dict(sorted(self.meta.items())),
            "cells": [c.to_dict() for c in self.cells],
            "violations": [c.to_dict() for c in self.violations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, default=_json_default)

    def to_csv(self) -> str:
        rows = [c.to_dict() for c in self.cells]
        keys: list[str] = []
        for r in rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["family", "fitted_C", *keys], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"family": self.family.id.value, "fitted_C": self.fitted_C,
                        **{k: _fmt(v) for k, v in r.items()}})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def fit_constant(family: BoundFamily,
                 cells: Sequence[BoundCheck] | Callable[[float], Sequence[BoundCheck]],
                 search_grid: Iterable[float] = DEFAULT_SEARCH_GRID) -> ConstantLedger:
    """Smallest grid constant under which every in-envelope cell is certified.

    ``cells`` is a fixed list, or a function of C when the measured event
    itself depends on the constant (event-side constants, C-dependent
    envelopes).  A constant qualifies when at least one cell lies in its
    envelope and no cell is a violation.  When nothing qualifies the ledger
    carries the violations at the largest grid value.
    """
    grid = [float(c) for c in search_grid]
    if not grid:
        raise ValueError("search grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("search grid must be strictly increasing")
    if not callable(cells) and len(cells) == 0:
        raise ValueError("no cells to fit")
    evaluated: list[BoundCheck] = []
    for C in grid:
        current = cells(C) if callable(cells) else cells
        evaluated = [evaluate_cell(family, c, C) for c in current]
        inside = [c for c in evaluated if c.in_envelope]
        if inside and not any(c.status == "violation" for c in inside):
            return ConstantLedger(family, C, evaluated, grid)
    bad = [c for c in evaluated if c.status == "violation"]
    return ConstantLedger(family, None, evaluated, grid, violations=bad)
