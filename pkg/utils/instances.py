"""
Instance generators for the sequential pricing lab
Handles the XOS, monotone and recovery-scheme lower-bound instances with their analytic
demand oracles, plus random subadditive and gross substitutes test families
"""

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    INF,
    TOL,
    BuyerDistribution,
    DemandResult,
    DimensionMismatchError,
    InstanceTooLargeError,
    ItemPricing,
    PricingError,
    RandomPricing,
    Valuation,
    ValuationFamily,
    clause_set,
    items_of,
    select_demand,
    validate_class_tag,
)
from .log import logger
from .mechanisms import Instance
from .settings import get_setting

SUBADDITIVE_FAMILIES = ("coverage", "budgeted_additive", "xos_random")
# candidate mask for "some nonempty set of items below the level" in the recovery bound
LIGHT_SUBSET = -1


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % d for d in range(2, math.isqrt(n) + 1))


def largest_prime_at_most(n: int) -> int:
    """Largest prime <= n by trial division"""
    for candidate in range(n, 1, -1):
        if is_prime(candidate):
            return candidate
    raise PricingError(f"No prime <= {n}")


def _xos_demand(clauses: Sequence[Sequence[float]], value, prices: Sequence[float]) -> DemandResult:
    cands = []
    for clause in clauses:
        _, pay, mask = clause_set(clause, prices)
        cands.append((value(mask) - pay, pay, mask))
    u, pay, mask = select_demand(cands)
    return DemandResult(items_of(mask), pay, u)


# ---------------------------------------------------------------------------
# XOS lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XosLbParams:
    """
    One buyer valuation of the XOS lower-bound instance.

    Clause A pays 1 + t + eps per item of A; every B with |B| = t*ell pays 1 + k/ell per item,
    so v(T) = max((1 + t + eps)|T & A|, (1 + k/ell) min(|T|, t*ell)).
    """

    m: int
    k: int
    t: int
    A: int  # bitmask
    h: int
    ell: int
    eps: float
    relaxed: bool = False

    def __post_init__(self):
        if popcount(self.A) != self.k or self.A >> self.m:
            raise PricingError(f"A must hold exactly k={self.k} of the {self.m} items")
        if self.t * self.ell > self.m:
            raise PricingError(f"t*ell = {self.t * self.ell} exceeds m = {self.m}")
        if self.eps < 0:
            raise PricingError("eps must be >= 0")
        if self.relaxed:
            return
        if self.m != self.k * self.k:
            raise PricingError(f"m must equal k^2, got m={self.m}, k={self.k}")
        if self.t % 2 or 2 ** (self.t * self.t) != self.k:
            raise PricingError(f"t must be even with t^2 = log2 k, got t={self.t}, k={self.k}")
        if not 1 <= self.h <= math.log2(self.k) / 2 or self.ell != 2**self.h:
            raise PricingError(f"ell must be 2^h with 1 <= h <= log2(k)/2, got h={self.h}, ell={self.ell}")

    @property
    def a_price(self) -> float:
        return 1.0 + self.t + self.eps

    @property
    def b_price(self) -> float:
        return 1.0 + self.k / self.ell

    @property
    def b_size(self) -> int:
        return self.t * self.ell

    def value(self, mask: int) -> float:
        return max(self.a_price * popcount(mask & self.A), self.b_price * min(popcount(mask), self.b_size))

    def _a_candidate(self, prices: Sequence[float]) -> int:
        chosen = 0
        for j in items_of(self.A):
            p = prices[j]
            margin = self.a_price - p
            if math.isfinite(p) and (margin > TOL or (margin >= -TOL and p > TOL)):
                chosen |= 1 << j
        return chosen

    def _b_candidate(self, prices: Sequence[float]) -> int:
        eligible = []
        for j, p in enumerate(prices):
            margin = self.b_price - p
            if math.isfinite(p) and (margin > TOL or (margin >= -TOL and p > TOL)):
                eligible.append((p, j))
        eligible.sort()
        return sum(1 << j for _, j in eligible[: self.b_size])

    def demand(self, prices: Sequence[float]) -> DemandResult:
        """Analytic demand: best of the A candidate and the cheapest-prefix B candidate"""
        cands = []
        for mask in (self._a_candidate(prices), self._b_candidate(prices)):
            pay = sum(prices[j] for j in items_of(mask))
            cands.append((self.value(mask) - pay, pay, mask))
        u, pay, mask = select_demand(cands)
        return DemandResult(items_of(mask), pay, u)


def xos_lb_component_utilities(params: XosLbParams, p: ItemPricing) -> Tuple[float, float]:
    """
    (Util(A), Util(B)) of the best A-set without the eps bump and the best B-set.
    """
    util_a = sum(max(0.0, 1.0 + params.t - p[j]) for j in items_of(params.A))
    margins = sorted((params.b_price - x for x in p if math.isfinite(x)), reverse=True)
    util_b = sum(max(0.0, x) for x in margins[: params.b_size])
    return util_a, util_b


def xos_lb_demand(params: XosLbParams, p: ItemPricing) -> DemandResult:
    if p.m != params.m:
        raise DimensionMismatchError(f"Pricing has {p.m} items, XOS bound instance has {params.m}")
    return params.demand(p.prices)


def xos_lb_validation_params(k: int, t: int, ell: int, A: Sequence[int], eps: float = 1e-6) -> XosLbParams:
    """Relaxed small-parameter variant (independent k, t, ell) used only for oracle cross-checks"""
    m = k * k
    A_mask = sum(1 << j for j in A)
    h = int(round(math.log2(ell))) if ell > 0 and 2 ** round(math.log2(ell)) == ell else 0
    return XosLbParams(m, k, t, A_mask, h, ell, eps, relaxed=True)


def xos_lb_clauses(params: XosLbParams, max_clauses: int = 20000) -> Valuation:
    """Explicit max-of-additive representation: clause A plus one clause per t*ell-subset"""
    count = math.comb(params.m, params.b_size) + 1
    if count > max_clauses:
        raise InstanceTooLargeError(f"Explicit representation needs {count} clauses")
    clause_a = tuple(params.a_price if params.A >> j & 1 else 0.0 for j in range(params.m))
    clauses = [clause_a]
    for B in combinations(range(params.m), params.b_size):
        members = set(B)
        clauses.append(tuple(params.b_price if j in members else 0.0 for j in range(params.m)))
    return Valuation("xos", params.m, clauses=tuple(clauses))


def gen_xos_lb(
    t: int = 2,
    eps: Optional[float] = None,
    seed: int = 0,
    config: Optional[Dict] = None,
) -> Tuple[Instance, ItemPricing]:
    """
    XOS lower-bound instance: k = 2^(t^2) buyers, m = k^2 items.

    Each buyer's A is uniform over the k blocks of seeded random partitions of the items
    (so every item lies in A with probability exactly 1/k) and h is uniform in
    [1, log2(k)/2].

    Args:
        t: Even integer >= 2
        eps: Bump on clause A (defaults to xos_lb_eps)
        seed: Partition seed
        config: Optional configuration

    Returns:
        (Instance, all-ones reference pricing)

    Raises:
        PricingError: If t is odd or < 2
        InstanceTooLargeError: If m exceeds xos_lb_max_items
    """
    if t < 2 or t % 2:
        raise PricingError(f"t must be an even integer >= 2, got {t}")
    eps = get_setting(config, "xos_lb_eps") if eps is None else eps
    k = 2 ** (t * t)
    m = k * k
    if m > get_setting(config, "xos_lb_max_items"):
        raise InstanceTooLargeError(f"t={t} needs m={m} items, above xos_lb_max_items")
    partitions = get_setting(config, "xos_lb_partitions_per_buyer")
    hs = range(1, t * t // 2 + 1)
    rng = np.random.default_rng(seed)
    buyers = []
    for _ in range(k):
        valuations = []
        for _ in range(partitions):
            blocks = rng.permutation(m).reshape(k, k)
            for block in blocks:
                A = sum(1 << int(j) for j in block)
                for h in hs:
                    params = XosLbParams(m, k, t, A, h, 2**h, eps)
                    valuations.append(Valuation("xos_lb", m, params=params))
        buyers.append(BuyerDistribution.uniform(valuations))
    logger.info(f"Generated XOS lower bound: t={t}, k={k}, m={m}, {len(buyers[0].support)} valuations per buyer")
    meta = {"family": "xos-lb", "t": t, "eps": eps, "seed": seed}
    return Instance(tuple(buyers), meta), ItemPricing.uniform(m, 1.0)


# ---------------------------------------------------------------------------
# Monotone lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoodCollection:
    """ell partitions of the ell^2 grid items into lines; item (x, y) has index x*ell + y"""

    ell: int
    partitions: Tuple[Tuple[int, ...], ...]  # partitions[i][j] is the bitmask of B_ij

    def bundle(self, i: int, j: int) -> frozenset:
        return items_of(self.partitions[i][j])

    def validate(self) -> None:
        """Raise PricingError if a partition or a cross intersection fails"""
        full = (1 << (self.ell * self.ell)) - 1
        for i, bundles in enumerate(self.partitions):
            union = 0
            for b in bundles:
                if union & b:
                    raise PricingError(f"Partition {i} has overlapping bundles")
                union |= b
            if union != full:
                raise PricingError(f"Partition {i} does not cover all items")
        for i, i2 in combinations(range(self.ell), 2):
            for j, b in enumerate(self.partitions[i]):
                for j2, b2 in enumerate(self.partitions[i2]):
                    if not b & b2:
                        raise PricingError(f"Bundles B_{i}{j} and B_{i2}{j2} do not intersect")


def good_collection(ell: int, validate_up_to: int = 13) -> GoodCollection:
    """
    Lines B_ij = {(x, y): y = (x i + j) mod ell} over the ell x ell grid.

    Args:
        ell: Prime
        validate_up_to: Exhaustively validate when ell is at most this

    Returns:
        GoodCollection

    Raises:
        PricingError: If ell is not prime
    """
    if not is_prime(ell):
        raise PricingError(f"ell must be prime, got {ell}")
    partitions = []
    for i in range(ell):
        bundles = []
        for j in range(ell):
            bundles.append(sum(1 << (x * ell + (x * i + j) % ell) for x in range(ell)))
        partitions.append(tuple(bundles))
    collection = GoodCollection(ell, tuple(partitions))
    if ell <= validate_up_to:
        collection.validate()
    return collection


def gen_monotone_lb(
    m: int,
    n: Optional[int] = None,
    eps: Optional[float] = None,
    config: Optional[Dict] = None,
) -> Tuple[Instance, Tuple[RandomPricing, ...]]:
    """
    Monotone lower-bound instance on a good collection.

    ell is the largest prime <= floor(sqrt(m)); buyer i < N = min(n, ell) values 1 any set
    holding a bundle of partition i, the remaining buyers value nothing. Items outside the
    ell^2 grid are worthless.

    Args:
        m: Item count (>= 4)
        n: Buyer count (defaults to ell)
        eps: Price discount (defaults to monotone_lb_eps)
        config: Optional configuration

    Returns:
        (Instance, per-buyer reference pricings uniform over the buyer's bundle pricings)
    """
    if m < 4:
        raise PricingError(f"Monotone lower bound needs m >= 4, got {m}")
    eps = get_setting(config, "monotone_lb_eps") if eps is None else eps
    ell = largest_prime_at_most(math.isqrt(m))
    n = ell if n is None else n
    N = min(n, ell)
    collection = good_collection(ell)
    price = (1.0 - eps) / ell
    buyers, reference = [], []
    for i in range(n):
        if i < N:
            bundles = collection.partitions[i]
            buyers.append(BuyerDistribution.point(Valuation("bundle_threshold", m, bundles=bundles)))
            pricings = [
                ItemPricing(tuple(price if b >> j & 1 else INF for j in range(m))) for b in bundles
            ]
            reference.append(RandomPricing(tuple((1.0 / ell, p) for p in pricings)))
        else:
            buyers.append(BuyerDistribution.point(Valuation("bundle_threshold", m)))
            reference.append(RandomPricing.point(ItemPricing.all_inf(m)))
    logger.info(f"Generated monotone lower bound: m={m}, ell={ell}, N={N}, n={n}")
    meta = {"family": "monotone-lb", "m": m, "n": n, "eps": eps, "ell": ell, "N": N}
    return Instance(tuple(buyers), meta), tuple(reference)


# ---------------------------------------------------------------------------
# Recovery-scheme lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RrsLbParams:
    """
    Valuation v_{i,R}: the max of two additive components.

    Item i sits at level i+1 with top = beta^(i+1). Component one pays top on item i and
    eps + sum_{k in R} (top - beta^(k+1)) on the last item; component two pays top on R.
    """

    m: int
    i: int
    R: int  # bitmask of items below i
    beta: float
    eps: float

    def __post_init__(self):
        if not 0 <= self.i < self.m - 1:
            raise PricingError(f"i must lie in [0, {self.m - 1}), got {self.i}")
        if self.R >> self.i:
            raise PricingError("R must only hold items below i")

    @property
    def top(self) -> float:
        return self.beta ** (self.i + 1)

    def clauses(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        top = self.top
        first = [0.0] * self.m
        first[self.i] = top
        first[self.m - 1] = self.eps + sum(top - self.beta ** (k + 1) for k in items_of(self.R))
        second = tuple(top if self.R >> j & 1 else 0.0 for j in range(self.m))
        return tuple(first), second

    def value(self, mask: int) -> float:
        return max(sum(c[j] for j in items_of(mask)) for c in self.clauses())

    def demand(self, prices: Sequence[float]) -> DemandResult:
        return _xos_demand(self.clauses(), self.value, prices)


@dataclass(frozen=True)
class RrsLbFamily(ValuationFamily):
    """
    Distribution over v_{i,R}: i with probability beta^-(i+1)/sigma, each item below i in R
    independently with probability (m-1)^(-1/2).

    Allocations are exact without enumerating the 2^(m-1) support whenever the last item is
    not offered, or when the first component provably wins for every R.
    """

    m: int
    eps: float = 1e-6
    enum_limit: int = 1 << 20

    def __post_init__(self):
        if self.m < 5:
            raise PricingError(f"Recovery lower bound needs m >= 5, got {self.m}")
        if self.eps <= 0:
            raise PricingError("eps must be > 0")

    @property
    def beta(self) -> float:
        return math.sqrt(self.m - 1)

    @property
    def r(self) -> float:
        return 1.0 / math.sqrt(self.m - 1)

    @cached_property
    def sigma(self) -> float:
        return sum(self.beta ** -(i + 1) for i in range(self.m - 1))

    @cached_property
    def level_weights(self) -> Tuple[float, ...]:
        return tuple(self.beta ** -(i + 1) / self.sigma for i in range(self.m - 1))

    def reference_pricing(self) -> ItemPricing:
        return ItemPricing(tuple(self.beta ** (j + 1) for j in range(self.m - 1)) + (0.0,))

    def available(self) -> frozenset:
        return frozenset(range(self.m - 1))

    def params(self, i: int, R: int) -> RrsLbParams:
        return RrsLbParams(self.m, i, R, self.beta, self.eps)

    def valuation(self, i: int, R: int) -> Valuation:
        return Valuation("rrs_lb", self.m, params=self.params(i, R))

    def support_size(self) -> int:
        return (1 << (self.m - 1)) - 1

    def iter_support(self) -> Iterator[Tuple[float, Valuation]]:
        if self.support_size() > self.enum_limit:
            raise InstanceTooLargeError(f"Support of {self.support_size()} valuations exceeds the enumeration limit")
        r = self.r
        for i, weight in enumerate(self.level_weights):
            for R in range(1 << i):
                size = popcount(R)
                yield weight * r**size * (1 - r) ** (i - size), self.valuation(i, R)

    def sample(self, rng: np.random.Generator) -> Valuation:
        i = int(rng.choice(self.m - 1, p=np.asarray(self.level_weights) / sum(self.level_weights)))
        picks = rng.random(i) < self.r
        return self.valuation(i, sum(1 << j for j in range(i) if picks[j]))

    def allocation(self, p: ItemPricing) -> np.ndarray:
        if p.m != self.m:
            raise DimensionMismatchError(f"Pricing has {p.m} items, family has {self.m}")
        if math.isinf(p[self.m - 1]):
            return self._allocation_without_last(p)
        if self._first_component_wins(p):
            return self._allocation_first_component(p)
        alloc = np.zeros(self.m)
        for prob, v in self.iter_support():
            for j in v.params.demand(p.prices).items:
                alloc[j] += prob
        return alloc

    def _first_component_wins(self, p: ItemPricing) -> bool:
        # with q_last < eps and q_k >= beta^(k+1) the first component beats the second for every R
        if p[self.m - 1] >= self.eps - (self.m + 1) * TOL:
            return False
        return all(p[k] >= self.beta ** (k + 1) - TOL for k in range(self.m - 1))

    def _allocation_first_component(self, p: ItemPricing) -> np.ndarray:
        alloc = np.zeros(self.m)
        alloc[self.m - 1] = 1.0
        for i, weight in enumerate(self.level_weights):
            q = p[i]
            margin = self.beta ** (i + 1) - q
            if math.isfinite(q) and (margin > TOL or (margin >= -TOL and q > TOL)):
                alloc[i] += weight
        return alloc

    def _allocation_without_last(self, p: ItemPricing) -> np.ndarray:
        alloc = np.zeros(self.m)
        for i, weight in enumerate(self.level_weights):
            self._add_level(alloc, i, weight, p)
        return alloc

    def _add_level(self, alloc: np.ndarray, i: int, weight: float, p: ItemPricing) -> None:
        """Exact allocation of level i averaged over R (last item not offered)"""
        top = self.beta ** (i + 1)
        r = self.r
        alternatives = []
        q_i = p[i]
        margin_i = top - q_i
        if math.isfinite(q_i) and (margin_i > TOL or (margin_i >= -TOL and q_i > TOL)):
            alternatives.append((margin_i, q_i, 1 << i))
        best_alt = max([0.0] + [u for u, _, _ in alternatives])

        heavy, light = [], {}
        for j in range(i):
            q = p[j]
            margin = top - q
            if not math.isfinite(q) or not (margin > TOL or (margin >= -TOL and q > TOL)):
                continue
            if margin > best_alt + TOL:
                heavy.append(j)
            else:
                light.setdefault(float(f"{q:.12g}"), []).append(j)

        for j in heavy:
            alloc[j] += weight * r
        no_heavy = (1.0 - r) ** len(heavy)

        groups = list(light.items())
        configs = math.prod(len(members) + 1 for _, members in groups)
        if configs > self.enum_limit:
            raise InstanceTooLargeError(f"Level {i} needs {configs} light configurations")
        win_first = 0.0
        bought = [0.0] * len(groups)
        for counts in product(*(range(len(members) + 1) for _, members in groups)):
            prob = 1.0
            util = pay = 0.0
            for (q, members), c in zip(groups, counts):
                size = len(members)
                prob *= math.comb(size, c) * r**c * (1 - r) ** (size - c)
                util += c * (top - q)
                pay += c * q
            cands = list(alternatives)
            if any(counts):
                # any nonempty subset of items below i has a smaller bitmask than {i}
                cands.append((util, pay, LIGHT_SUBSET))
            _, _, winner = select_demand(cands)
            if winner == LIGHT_SUBSET:
                for g, c in enumerate(counts):
                    bought[g] += prob * c / len(groups[g][1])
            elif winner == 1 << i:
                win_first += prob

        alloc[i] += weight * no_heavy * win_first
        for g, (_, members) in enumerate(groups):
            for j in members:
                alloc[j] += weight * ((1.0 - no_heavy) * r + no_heavy * bought[g])


def gen_rrs_lb(m: int, eps: float = 1e-6, config: Optional[Dict] = None) -> Tuple[RrsLbFamily, ItemPricing, frozenset]:
    """
    Recovery-scheme lower bound: (distribution, p = (beta, ..., beta^(m-1), 0), S = all but the last item).

    Args:
        m: Item count (>= 5)
        eps: Bump on the last item of the first component
        config: Optional configuration (rrs_lb_enum_limit)

    Returns:
        (RrsLbFamily, reference pricing, available set)
    """
    family = RrsLbFamily(m, eps, get_setting(config, "rrs_lb_enum_limit"))
    return family, family.reference_pricing(), family.available()


def rrs_lb_grid(family: RrsLbFamily, seed: int = 0, random_labellings: int = 24) -> List[ItemPricing]:
    """
    Label-aligned pricings on S: per item c * beta^L with c in {1/2, 1, 2}, or inf.

    Covers shifted identity labellings, uniform levels and seeded random labellings near
    each item's own level; the last item is never offered.
    """
    m, beta = family.m, family.beta
    levels = range(1, m)
    scales = (0.5, 1.0, 2.0)
    grid = []
    for shift, c in product((-1, 0, 1), scales):
        grid.append(tuple(c * beta ** max(0, level + shift) for level in levels))
    for level, c in product(levels, scales):
        grid.append(tuple(c * beta**level for _ in levels))
    rng = np.random.default_rng(seed)
    for _ in range(random_labellings):
        row = []
        for level in levels:
            if rng.random() < 0.2:
                row.append(INF)
            else:
                exponent = max(0, level + int(rng.integers(-1, 2)))
                row.append(float(rng.choice(scales)) * beta**exponent)
        grid.append(tuple(row))
    return [ItemPricing(prices + (INF,)) for prices in grid]


# ---------------------------------------------------------------------------
# Random test families
# ---------------------------------------------------------------------------


def coverage_valuation(m: int, covers: Sequence[int], weights: Sequence[float]) -> Valuation:
    """v(S) = total weight of the elements covered by the items of S (covers are bitmasks)"""
    if len(covers) != m:
        raise DimensionMismatchError(f"{len(covers)} covers for {m} items")
    weights = np.asarray(weights, dtype=float)
    values = []
    for mask in range(1 << m):
        union = 0
        for j in items_of(mask):
            union |= covers[j]
        values.append(float(sum(weights[e] for e in items_of(union))))
    return Valuation("table", m, values=tuple(values), class_tag="subadditive")


def budgeted_additive_valuation(values: Sequence[float], budget: float) -> Valuation:
    """v(S) = min(budget, sum_{j in S} a_j)"""
    m = len(values)
    table = tuple(min(budget, float(sum(values[j] for j in items_of(mask)))) for mask in range(1 << m))
    return Valuation("table", m, values=table, class_tag="subadditive")


def _random_subadditive_valuation(m: int, family: str, rng: np.random.Generator) -> Valuation:
    if family == "coverage":
        ground = 2 * m
        weights = rng.uniform(0.5, 2.0, ground)
        covers = []
        for _ in range(m):
            picks = rng.random(ground) < 0.4
            picks[rng.integers(ground)] = True
            covers.append(sum(1 << e for e in range(ground) if picks[e]))
        return coverage_valuation(m, covers, weights)
    if family == "budgeted_additive":
        values = rng.uniform(0.2, 2.0, m)
        budget = float(rng.uniform(0.3, 1.0) * values.sum())
        return budgeted_additive_valuation(values.tolist(), budget)
    clauses = rng.uniform(0.0, 2.0, (3, m)) * (rng.random((3, m)) < 0.8)
    return Valuation("xos", m, clauses=tuple(map(tuple, clauses.tolist())))


def _random_probabilities(size: int, rng: np.random.Generator) -> List[float]:
    raw = rng.uniform(0.2, 1.0, size)
    probs = (raw / raw.sum()).tolist()
    probs[-1] = 1.0 - sum(probs[:-1])
    return probs


def gen_random_subadditive(
    m: int,
    support_size: int,
    family: str,
    seed: int,
    n: Optional[int] = None,
    config: Optional[Dict] = None,
) -> Instance:
    """
    Random instance whose valuations belong to a subadditive family by construction.

    Args:
        m: Item count (<= table_max_items)
        support_size: Valuations per buyer
        family: coverage, budgeted_additive or xos_random
        seed: Generator seed
        n: Buyer count (defaults to random_buyers)
        config: Optional configuration

    Returns:
        Instance; table valuations carry a subadditive class tag and are validated
    """
    if family not in SUBADDITIVE_FAMILIES:
        raise PricingError(f"Unknown subadditive family: {family}")
    if m > get_setting(config, "table_max_items"):
        raise InstanceTooLargeError(f"Random subadditive instances need m <= {get_setting(config, 'table_max_items')}")
    n = get_setting(config, "random_buyers") if n is None else n
    rng = np.random.default_rng(seed)
    buyers = []
    for _ in range(n):
        valuations = [_random_subadditive_valuation(m, family, rng) for _ in range(support_size)]
        for v in valuations:
            validate_class_tag(v, config)
        probs = _random_probabilities(support_size, rng)
        buyers.append(BuyerDistribution(tuple(zip(probs, valuations))))
    meta = {"family": family, "m": m, "support": support_size, "seed": seed, "n": n}
    return Instance(tuple(buyers), meta)


def gen_random_gs(m: int, n: int, support_size: int, seed: int) -> Instance:
    """Random gross substitutes instance mixing unit-demand and additive valuations"""
    rng = np.random.default_rng(seed)
    buyers = []
    for _ in range(n):
        valuations = []
        for _ in range(support_size):
            kind = "unit_demand" if rng.random() < 0.5 else "additive"
            values = np.round(rng.uniform(0.0, 2.0, m), 3)
            valuations.append(Valuation(kind, m, values=tuple(values.tolist())))
        probs = _random_probabilities(support_size, rng)
        buyers.append(BuyerDistribution(tuple(zip(probs, valuations))))
    meta = {"family": "gs", "m": m, "support": support_size, "seed": seed, "n": n}
    return Instance(tuple(buyers), meta)
