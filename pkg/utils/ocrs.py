"""
Contention resolution for the sequential pricing lab
Handles the convex hull sampler, the recovery-scheme to contention-resolution reduction,
the exact gross substitutes decomposition and the contention-resolution verifier
"""

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    TOL,
    DimensionMismatchError,
    ItemPricing,
    PricingError,
    RandomPricing,
    ValuationFamily,
    VerificationReport,
    as_mask,
    as_random_pricing,
    check_geq,
    check_leq,
    expected_alloc,
    expected_rev,
    items_of,
)
from .log import logger
from .rrs import RRS_SELECTORS, RrsSelector, effective_mask, pricing_mass, subadd_alpha

Availability = Sequence[Tuple[float, frozenset]]
ZERO_REL = 1e-12


class HullAssumptionError(PricingError):
    """A hull oracle answer breaks support or mass assumptions; carries the queried set"""

    def __init__(self, message: str, T: frozenset):
        super().__init__(message)
        self.T = T


@dataclass(frozen=True)
class HullInput:
    k: int
    w: Tuple[float, ...]
    y_oracle: Callable[[frozenset], Sequence[float]]


@dataclass
class HullDistribution:
    support: List[Tuple[frozenset, float]]
    mixed: np.ndarray  # sum_T lambda_T y^T
    residual: np.ndarray  # final w tilde
    trajectory: List[np.ndarray] = field(default_factory=list)
    queries: int = 0

    @property
    def total(self) -> float:
        return sum(lam for _, lam in self.support)


def _checked_answer(inp: HullInput, T: frozenset, w: np.ndarray, norm: float) -> np.ndarray:
    y = np.asarray(inp.y_oracle(T), dtype=float)
    if y.shape != (inp.k,):
        raise HullAssumptionError(f"Oracle returned shape {y.shape} for T={sorted(T)}, expected ({inp.k},)", T)
    if np.any(~np.isfinite(y)) or np.any(y < -TOL):
        raise HullAssumptionError(f"Oracle returned a negative or non-finite vector for T={sorted(T)}", T)
    outside = [j for j in range(inp.k) if j not in T and y[j] > TOL]
    if outside:
        raise HullAssumptionError(f"y^T is positive outside T={sorted(T)} at {outside[0]}", T)
    need = float(sum(w[j] for j in T))
    if y.sum() < need - TOL * max(1.0, norm):
        raise HullAssumptionError(f"|y^T| = {y.sum():.12g} < w(T) = {need:.12g} for T={sorted(T)}", T)
    return np.maximum(y, 0.0)


def convex_hull_sampler(inp: HullInput) -> HullDistribution:
    """
    Greedy distribution over sets whose mixed vector stays below w.

    Starting from the support of w, repeatedly query y^Q, take the largest step tau with
    tau y^Q <= w tilde (capped by the remaining mass), subtract it and drop exhausted
    coordinates. Remaining mass goes to the empty set.

    Args:
        inp: HullInput with dimension, target w and the set oracle

    Returns:
        HullDistribution; sum lambda_T y^T <= w and |sum lambda_T y^T| >= (1 - 1/e)|w|

    Raises:
        HullAssumptionError: If an oracle answer breaks its assumptions
    """
    w = np.asarray(inp.w, dtype=float)
    if w.shape != (inp.k,):
        raise DimensionMismatchError(f"w has shape {w.shape}, expected ({inp.k},)")
    if np.any(w < 0):
        raise PricingError("Hull target w must be nonnegative")
    norm = float(w.sum())
    threshold = ZERO_REL * norm
    residual = w.copy()
    mixed = np.zeros(inp.k)
    support: List[Tuple[frozenset, float]] = []
    trajectory = [residual.copy()]
    sigma = 0.0
    queries = 0
    Q = frozenset(j for j in range(inp.k) if residual[j] > threshold)
    while Q and sigma < 1.0:
        y = _checked_answer(inp, Q, w, norm)
        queries += 1
        bounded = [j for j in Q if y[j] > 0]
        if not bounded:
            raise HullAssumptionError(f"y^Q vanishes on Q={sorted(Q)}", Q)
        tight = min(bounded, key=lambda j: residual[j] / y[j])
        tau = residual[tight] / y[tight]
        lam = min(tau, 1.0 - sigma)
        if lam > 0:
            support.append((Q, lam))
            mixed += lam * y
        sigma += lam
        residual = np.maximum(residual - lam * y, 0.0)
        if lam == tau:
            residual[tight] = 0.0
        trajectory.append(residual.copy())
        Q = frozenset(j for j in range(inp.k) if residual[j] > threshold)
    if sigma < 1.0:
        support.append((frozenset(), 1.0 - sigma))
    logger.debug(f"Hull sampler: {queries} queries, {len(support)} atoms, residual {residual.sum():.3g}")
    return HullDistribution(support, mixed, residual, trajectory, queries)


def _resolve_selector(rrs: Union[str, RrsSelector]) -> RrsSelector:
    if isinstance(rrs, str):
        if rrs not in RRS_SELECTORS:
            raise PricingError(f"Unknown recovery scheme: {rrs}")
        return RRS_SELECTORS[rrs]
    return rrs


def default_alpha(rrs: Union[str, RrsSelector], p: ItemPricing, S, m: int) -> float:
    """1 for the identity scheme, 4 log2(2 m aspect) for the scaling scheme"""
    selector = _resolve_selector(rrs)
    return 1.0 if selector is RRS_SELECTORS["gs"] else subadd_alpha(p, S, m)


def ocrs_hull(
    D: ValuationFamily,
    S,
    p: ItemPricing,
    rrs: Union[str, RrsSelector] = "subadd",
    alpha: Optional[float] = None,
) -> Tuple[HullDistribution, Dict[frozenset, ItemPricing]]:
    """
    Run the hull sampler for one deterministic reference pricing.

    w_j = p_j Alloc_j(D, p) on the offered items of S; y^T_j = alpha q^T_j Alloc_j(D|T, q^T)
    with q^T the recovery pricing for T, computed on demand and memoized per T.

    Returns:
        (HullDistribution over item sets, offered pricing per set, inf off the set)
    """
    selector = _resolve_selector(rrs)
    mask = effective_mask(p, S)
    if alpha is None:
        alpha = default_alpha(selector, p, mask, D.m)
    alloc = expected_alloc(D, p)
    w = tuple(p[j] * alloc[j] if mask >> j & 1 and alloc[j] > 0 else 0.0 for j in range(D.m))
    offers: Dict[frozenset, ItemPricing] = {}
    answers: Dict[frozenset, np.ndarray] = {}

    def oracle(T: frozenset) -> np.ndarray:
        if T not in answers:
            T_mask = as_mask(T, D.m)
            q = selector(D, T_mask, p).restrict(T_mask)
            a = expected_alloc(D, q)
            offers[T] = q
            answers[T] = np.array([alpha * q[j] * a[j] if j in T and a[j] > 0 else 0.0 for j in range(D.m)])
        return answers[T]

    hull = convex_hull_sampler(HullInput(D.m, w, oracle))
    offers[frozenset()] = ItemPricing.all_inf(D.m)
    return hull, offers


def rrs_to_ocrs(
    D: ValuationFamily,
    S,
    x: Sequence[float],
    reference: Union[RandomPricing, ItemPricing],
    rrs: Union[str, RrsSelector] = "subadd",
    alpha: Optional[float] = None,
) -> RandomPricing:
    """
    Contention-resolution pricing over S built from a recovery scheme.

    Args:
        D: Buyer distribution
        S: Available item set
        x: Allocation constraint of the reference pricing
        reference: Reference pricing (the buyer's ex ante pricing)
        rrs: Recovery scheme name ("subadd", "gs") or selector callable
        alpha: Recovery factor; defaults per scheme and reference pricing

    Returns:
        RandomPricing mixing the recovery pricings q^T (restricted to T) over the reference
        support; the empty set maps to the all-inf pricing
    """
    if len(x) != D.m:
        raise DimensionMismatchError(f"x has {len(x)} entries, buyer has {D.m} items")
    reference = as_random_pricing(reference)
    weighted = []
    for prob, p in reference.support:
        if prob <= 0:
            continue
        hull, offers = ocrs_hull(D, S, p, rrs, alpha)
        weighted.extend((prob * lam, offers[T]) for T, lam in hull.support)
    return RandomPricing.mix(weighted)


def normalize_availability(S_dist, m: int) -> List[Tuple[float, int]]:
    """
    Normalize an availability description to [(probability, bitmask)].

    Accepts a fixed set (iterable of items or bitmask), a mapping set -> probability, or a
    sequence of (probability, set) pairs.
    """
    if isinstance(S_dist, (int, np.integer, set, frozenset, range)):
        return [(1.0, as_mask(S_dist, m))]
    if isinstance(S_dist, Mapping):
        pairs = [(float(prob), as_mask(S, m)) for S, prob in S_dist.items()]
    else:
        pairs = [(float(prob), as_mask(S, m)) for prob, S in S_dist]
    total = sum(prob for prob, _ in pairs)
    if abs(total - 1.0) > 1e-9:
        raise PricingError(f"Availability probabilities sum to {total!r}, expected 1")
    return [(prob, mask) for prob, mask in pairs if prob > 0]


def bernoulli_availability(m: int, probs: Sequence[float]) -> List[Tuple[float, frozenset]]:
    """All 2^m sets with independent item availability probabilities"""
    if len(probs) != m:
        raise DimensionMismatchError(f"{len(probs)} availability probabilities for {m} items")
    out = []
    for bits in product((0, 1), repeat=m):
        prob = math.prod(p if b else 1.0 - p for p, b in zip(probs, bits))
        if prob > 0:
            out.append((prob, frozenset(j for j, b in enumerate(bits) if b)))
    return out


def gs_decomposition(
    D: ValuationFamily,
    S_dist,
    p: ItemPricing,
    y: Sequence[float],
) -> Tuple[RandomPricing, HullDistribution]:
    """gs_decompose plus the hull distribution it came from"""
    m = D.m
    dist = normalize_availability(S_dist, m)
    w = np.zeros(m)
    for prob, S in dist:
        w += prob * expected_alloc(D, p, available=S)
    y = np.asarray(y, dtype=float)
    if y.shape != (m,):
        raise DimensionMismatchError(f"Target y has shape {y.shape}, expected ({m},)")
    if np.any(y > w + TOL):
        j = int(np.argmax(y - w))
        raise PricingError(f"Target y is not dominated by the allocation: y_{j}={y[j]:.12g} > w_{j}={w[j]:.12g}")
    y = np.clip(y, 0.0, None)

    def oracle(T: frozenset) -> np.ndarray:
        T_mask = as_mask(T, m)
        x_T = np.zeros(m)
        for prob, S in dist:
            x_T += prob * expected_alloc(D, p, available=S & T_mask)
        return x_T

    hull = convex_hull_sampler(HullInput(m, tuple(y), oracle))
    weighted = [
        (lam, p.restrict(as_mask(T, m)) if T else ItemPricing.all_inf(m)) for T, lam in hull.support
    ]
    return RandomPricing.mix(weighted), hull


def gs_decompose(D: ValuationFamily, S_dist, p: ItemPricing, y: Sequence[float]) -> RandomPricing:
    """
    Exact decomposition of a target allocation for gross substitutes buyers.

    Writes y = sum_T lambda_T x^T with x^T = E_S[Alloc(D|S & T, p)] and returns the mixture
    of the pricings equal to p on T and inf elsewhere. Expected allocation is exactly y and
    expected revenue exactly sum_j p_j y_j.

    Args:
        D: Gross substitutes buyer distribution
        S_dist: Fixed available set or availability distribution
        p: Deterministic reference pricing
        y: Target allocation with y <= E_S[Alloc(D|S, p)]

    Returns:
        RandomPricing

    Raises:
        PricingError: If y is not dominated by the allocation under p
        HullAssumptionError: If D is not gross substitutes on the queried sets
    """
    return gs_decomposition(D, S_dist, p, y)[0]


OcrsOutput = Union[RandomPricing, ItemPricing, Mapping[frozenset, RandomPricing], Callable[[frozenset], RandomPricing]]


def _output_for(output: OcrsOutput, S: frozenset) -> RandomPricing:
    if isinstance(output, (RandomPricing, ItemPricing)):
        return as_random_pricing(output)
    if isinstance(output, Mapping):
        return as_random_pricing(output[S])
    return as_random_pricing(output(S))


def verify_ocrs(
    D: ValuationFamily,
    S_dist,
    x: Sequence[float],
    output: OcrsOutput,
    reference: Union[RandomPricing, ItemPricing],
    alpha: float,
) -> VerificationReport:
    """
    Check both contention-resolution conditions.

    (a) E_S[Alloc(D|S, output)] <= x coordinatewise
    (b') E_S[Rev(D|S, output)] >= (1/alpha) E_{S,p}[sum_{j in S} p_j Alloc_j(D, p)]

    Args:
        D: Buyer distribution
        S_dist: Fixed set or availability distribution
        x: Allocation constraint
        output: One pricing for every S, or a mapping/callable from S to its pricing
        reference: Reference pricing
        alpha: Revenue factor

    Returns:
        VerificationReport with both sides of each inequality
    """
    m = D.m
    dist = normalize_availability(S_dist, m)
    reference = as_random_pricing(reference)
    alloc = np.zeros(m)
    rev = mass = 0.0
    for prob, S in dist:
        offered = _output_for(output, items_of(S))
        alloc += prob * expected_alloc(D, offered, available=S)
        rev += prob * expected_rev(D, offered, available=S)
        for prob_p, p in reference.support:
            mass += prob * prob_p * pricing_mass(D, S, p)
    report = VerificationReport("ocrs")
    x = np.asarray(x, dtype=float)
    worst = int(np.argmax(alloc - x))
    report.add(check_leq("E_S[Alloc(D|S, output)] <= x", float(alloc[worst]), float(x[worst]), witness=worst))
    report.add(check_geq("E_S[Rev(D|S, output)] >= mass/alpha", rev, mass / alpha))
    return report
