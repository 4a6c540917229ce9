"""
Revenue recovery schemes for the sequential pricing lab
Handles uniform price scaling for subadditive buyers, the identity scheme for gross
substitutes buyers and the recovery-condition verifier
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from .core import (
    TOL,
    ItemPricing,
    Valuation,
    ValuationFamily,
    VerificationReport,
    as_mask,
    check_geq,
    demand,
    expected_alloc,
    expected_rev,
    items_of,
)
from .log import logger

ItemSet = Union[int, Iterable[int]]
RrsSelector = Callable[[ValuationFamily, ItemSet, ItemPricing], ItemPricing]


@dataclass(frozen=True)
class ScalingWindow:
    """Range [low, high] of the random scaling factor; aspect is the price aspect ratio on S"""

    low: float
    high: float
    aspect: float

    @property
    def log_ratio(self) -> float:
        return math.log(self.high / self.low)


def effective_mask(p: ItemPricing, S: ItemSet) -> int:
    """Items of S that are actually offered (finite price)"""
    return as_mask(S, p.m) & p.finite_mask()


def scaling_window(p: ItemPricing, S: ItemSet, m: Optional[int] = None) -> ScalingWindow:
    """
    Scaling window for pricing p on S: low = 1/2, high = m * aspect.

    The aspect ratio ignores zero prices; it is 1 when no positive price is left.
    """
    m = p.m if m is None else m
    positive = [p[j] for j in items_of(effective_mask(p, S)) if p[j] > TOL]
    aspect = max(positive) / min(positive) if positive else 1.0
    return ScalingWindow(0.5, m * aspect, aspect)


def subadd_alpha(p: ItemPricing, S: ItemSet, m: Optional[int] = None) -> float:
    """Recovery factor of the power-of-2 scheme: 4 log2(2 m aspect)"""
    window = scaling_window(p, S, m)
    return 4.0 * math.log2(2.0 * window.high)


def pricing_mass(D: ValuationFamily, S: ItemSet, p: ItemPricing) -> float:
    """sum_{j in S} p_j Alloc_j(D, p) with D facing all items"""
    mask = effective_mask(p, S)
    if not mask:
        return 0.0
    alloc = expected_alloc(D, p)
    return float(sum(p[j] * alloc[j] for j in items_of(mask) if alloc[j] > 0))


def _integrate_payment(v: Valuation, base: ItemPricing, window: ScalingWindow) -> float:
    """Integral of base(T(gamma)) over the window, T(gamma) the demand under gamma * base"""

    def payment(gamma: float) -> float:
        return base.price_of(demand(v, base.scaled(gamma)).mask)

    min_width = 1e-9 * window.high

    # payment is nonincreasing in gamma, so equal endpoints certify a constant interval
    def integrate(a: float, pa: float, b: float, pb: float) -> float:
        if abs(pa - pb) <= TOL * max(1.0, pa):
            return pa * (b - a)
        if b - a <= min_width:
            return 0.5 * (pa + pb) * (b - a)
        mid = 0.5 * (a + b)
        pm = payment(mid)
        return integrate(a, pa, mid, pm) + integrate(mid, pm, b, pb)

    return integrate(window.low, payment(window.low), window.high, payment(window.high))


def subadd_rrs_expected_rev(D: ValuationFamily, S: ItemSet, p: ItemPricing) -> float:
    """
    Exact E_gamma[Rev(D|S, gamma p)] for gamma with density 1/(gamma ln(high/low)).

    On an interval where the demanded set T is constant the integrand gamma p(T) f(gamma)
    is the constant p(T)/ln(high/low), so each interval contributes p(T)(b - a)/ln(high/low).

    Args:
        D: Buyer distribution with an enumerable support
        S: Available item set
        p: Reference pricing

    Returns:
        Expected revenue of the randomly scaled pricing on S
    """
    mask = effective_mask(p, S)
    if not mask:
        return 0.0
    window = scaling_window(p, mask, D.m)
    base = p.restrict(mask)
    total = 0.0
    for prob, v in D.iter_support():
        if prob > 0:
            total += prob * _integrate_payment(v, base, window)
    return total / window.log_ratio


def subadd_rrs_monte_carlo(
    D: ValuationFamily,
    S: ItemSet,
    p: ItemPricing,
    samples: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Sampled-gamma estimate of subadd_rrs_expected_rev: (mean, standard error)"""
    mask = effective_mask(p, S)
    if not mask:
        return 0.0, 0.0
    window = scaling_window(p, mask, D.m)
    base = p.restrict(mask)
    gammas = window.low * (window.high / window.low) ** rng.random(samples)
    revs = np.array([expected_rev(D, base.scaled(float(g))) for g in gammas])
    stderr = float(revs.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return float(revs.mean()), stderr


def scaling_candidates(window: ScalingWindow) -> list:
    """Powers of 2 inside [low, high]"""
    gammas = []
    gamma = window.low
    while gamma <= window.high * (1 + 1e-12):
        gammas.append(gamma)
        gamma *= 2.0
    return gammas


def subadd_rrs(D: ValuationFamily, S: ItemSet, p: ItemPricing) -> ItemPricing:
    """
    Deterministic scaling scheme: q = gamma* p for the best power of 2 in [1/2, m aspect].

    Ties go to the smaller factor. An empty S returns p unchanged.

    Args:
        D: Buyer distribution
        S: Available item set
        p: Reference pricing

    Returns:
        Scaled pricing (whole vector; callers restrict it to S when offering)
    """
    mask = effective_mask(p, S)
    if not mask:
        return p
    window = scaling_window(p, mask, D.m)
    best_gamma, best_rev = None, -1.0
    for gamma in scaling_candidates(window):
        rev = expected_rev(D, p.scaled(gamma), available=mask)
        if rev > best_rev + TOL:
            best_gamma, best_rev = gamma, rev
    logger.debug(f"subadd_rrs picked gamma={best_gamma} on {bin(mask)} with revenue {best_rev:.6g}")
    return p.scaled(best_gamma)


def gs_rrs(D: ValuationFamily, S: ItemSet, p: ItemPricing) -> ItemPricing:
    """Identity scheme q = p; a 1-recovery scheme for gross substitutes buyers"""
    return p


RRS_SELECTORS: Dict[str, RrsSelector] = {"subadd": subadd_rrs, "gs": gs_rrs}


def verify_rrs(
    D: ValuationFamily,
    S: ItemSet,
    p: ItemPricing,
    q: ItemPricing,
    alpha: float,
) -> VerificationReport:
    """
    Check both recovery conditions for (p, q) on S.

    (a) q_j >= p_j / alpha for every offered j in S
    (b) Rev(D|S, q) >= (1/alpha) sum_{j in S} p_j Alloc_j(D, p)

    Args:
        D: Buyer distribution
        S: Available item set
        p: Reference pricing
        q: Candidate recovery pricing
        alpha: Recovery factor (>= 1)

    Returns:
        VerificationReport holding both sides of each inequality
    """
    report = VerificationReport("rrs")
    mask = effective_mask(p, S)
    worst_j, worst_gap = None, math.inf
    for j in items_of(mask):
        gap = q[j] - p[j] / alpha
        if gap < worst_gap:
            worst_j, worst_gap = j, gap
    if worst_j is None:
        report.add(check_geq("price floor q_j >= p_j/alpha", 0.0, 0.0))
    else:
        report.add(check_geq("price floor q_j >= p_j/alpha", q[worst_j], p[worst_j] / alpha, witness=worst_j))
    rev = expected_rev(D, q, available=as_mask(S, p.m))
    report.add(check_geq("Rev(D|S, q) >= mass/alpha", rev, pricing_mass(D, mask, p) / alpha))
    return report


def utility_drop(v: Valuation, S: ItemSet, p: ItemPricing) -> Tuple[float, float]:
    """
    Both sides of Util(v|S, low p) - Util(v|S, high p) >= (1/2) sum_{j in S} p_j Alloc_j(v, p).

    Returns:
        (utility drop, half the reference mass on S)
    """
    mask = effective_mask(p, S)
    window = scaling_window(p, mask, v.m)
    base = p.restrict(mask)
    drop = demand(v, base.scaled(window.low)).utility - demand(v, base.scaled(window.high)).utility
    bought = demand(v, p).items
    mass = sum(p[j] for j in bought if mask >> j & 1)
    return drop, 0.5 * mass
