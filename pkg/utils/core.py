"""
Core types for the sequential pricing lab
Handles valuations, item pricings, buyer distributions, the demand oracle and class checks

Item sets are frozensets of 0-based item indices at the API surface and int bitmasks
(bit j set iff item j is in the set) internally.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from itertools import product
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .log import logger
from .settings import get_setting

TOL = 1e-9
PROB_TOL = 1e-12
INF = math.inf

KINDS = (
    "additive",
    "unit_demand",
    "xos",
    "table",
    "bundle_threshold",
    "xos_lb",
    "rrs_lb",
)
STRUCTURED_KINDS = ("additive", "unit_demand", "xos")
ANALYTIC_KINDS = ("xos_lb", "rrs_lb")
CLASSES = ("monotone", "subadditive", "xos_certified", "gross_substitutes")


class PricingError(ValueError):
    """Base class for domain errors"""


class DimensionMismatchError(PricingError):
    """Item counts of valuation, pricing or vector disagree"""


class InstanceTooLargeError(PricingError):
    """Exhaustive computation requested beyond the configured item limit"""


class ClassCheckError(PricingError):
    """A valuation fails the class it was declared to belong to"""


# ---------------------------------------------------------------------------
# Item sets
# ---------------------------------------------------------------------------


def as_mask(items: Union[int, Iterable[int], None], m: int) -> int:
    """Convert an item set (iterable or bitmask) to a bitmask; None means all items"""
    if items is None:
        return (1 << m) - 1
    if isinstance(items, (int, np.integer)):
        return int(items)
    mask = 0
    for j in items:
        if not 0 <= j < m:
            raise DimensionMismatchError(f"Item {j} outside [0, {m})")
        mask |= 1 << int(j)
    return mask


def items_of(mask: int) -> frozenset:
    """Items whose bits are set in mask"""
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return frozenset(out)


@lru_cache(maxsize=32)
def subset_matrix(m: int) -> np.ndarray:
    """Boolean matrix whose row s lists the items of bitmask s"""
    masks = np.arange(1 << m, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m, dtype=np.int64)) & 1).astype(bool)


# ---------------------------------------------------------------------------
# Pricings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ItemPricing:
    """Price vector over R>=0 and +inf; inf means the item is not offered"""

    prices: Tuple[float, ...]

    def __post_init__(self):
        prices = tuple(float(x) for x in self.prices)
        for j, x in enumerate(prices):
            if math.isnan(x) or x < 0:
                raise PricingError(f"Price of item {j} must be >= 0, got {x}")
        object.__setattr__(self, "prices", prices)

    @classmethod
    def all_inf(cls, m: int) -> "ItemPricing":
        return cls((INF,) * m)

    @classmethod
    def uniform(cls, m: int, price: float) -> "ItemPricing":
        return cls((price,) * m)

    @property
    def m(self) -> int:
        return len(self.prices)

    def __len__(self) -> int:
        return len(self.prices)

    def __getitem__(self, j: int) -> float:
        return self.prices[j]

    def __iter__(self):
        return iter(self.prices)

    def price_of(self, items: Union[int, Iterable[int]]) -> float:
        """p(T); inf when T holds an item that is not offered"""
        return sum(self.prices[j] for j in items_of(as_mask(items, self.m)))

    def restrict(self, items: Union[int, Iterable[int], None]) -> "ItemPricing":
        """Same prices on the given items, inf elsewhere"""
        mask = as_mask(items, self.m)
        return ItemPricing(tuple(x if mask >> j & 1 else INF for j, x in enumerate(self.prices)))

    def scaled(self, gamma: float) -> "ItemPricing":
        return ItemPricing(tuple(gamma * x for x in self.prices))

    def is_all_inf(self) -> bool:
        return all(math.isinf(x) for x in self.prices)

    def finite_mask(self) -> int:
        return sum(1 << j for j, x in enumerate(self.prices) if math.isfinite(x))


@dataclass(frozen=True)
class RandomPricing:
    """Finite-support distribution over item pricings"""

    support: Tuple[Tuple[float, ItemPricing], ...]

    def __post_init__(self):
        support = tuple((float(prob), pricing) for prob, pricing in self.support)
        if not support:
            raise PricingError("RandomPricing needs a nonempty support")
        m = support[0][1].m
        for prob, pricing in support:
            if prob < 0:
                raise PricingError(f"Negative pricing probability {prob}")
            if pricing.m != m:
                raise DimensionMismatchError("Pricings in one distribution must share m")
        total = sum(prob for prob, _ in support)
        if abs(total - 1.0) > PROB_TOL:
            raise PricingError(f"Pricing probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "support", support)

    @classmethod
    def point(cls, pricing: ItemPricing) -> "RandomPricing":
        return cls(((1.0, pricing),))

    @classmethod
    def mix(cls, weighted: Iterable[Tuple[float, ItemPricing]]) -> "RandomPricing":
        """
        Merge a weighted list of pricings into a distribution.

        Duplicate pricings are merged, zero weights dropped and the total renormalized.
        """
        merged: Dict[ItemPricing, float] = {}
        for weight, pricing in weighted:
            if weight > 0:
                merged[pricing] = merged.get(pricing, 0.0) + weight
        if not merged:
            raise PricingError("Cannot mix an empty set of pricings")
        total = sum(merged.values())
        support = [(w / total, pricing) for pricing, w in merged.items()]
        # absorb rounding residue in the heaviest atom
        heavy = max(range(len(support)), key=lambda k: support[k][0])
        rest = sum(w for k, (w, _) in enumerate(support) if k != heavy)
        support[heavy] = (1.0 - rest, support[heavy][1])
        return cls(tuple(support))

    @property
    def m(self) -> int:
        return self.support[0][1].m

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum([prob for prob, _ in self.support])

    def sample(self, rng: np.random.Generator) -> ItemPricing:
        k = int(np.searchsorted(self._cumulative, rng.random() * self._cumulative[-1], side="right"))
        return self.support[min(k, len(self.support) - 1)][1]


PricingLike = Union[ItemPricing, RandomPricing]


def as_random_pricing(q: PricingLike) -> RandomPricing:
    return q if isinstance(q, RandomPricing) else RandomPricing.point(q)


# ---------------------------------------------------------------------------
# Valuations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Valuation:
    """
    Tagged set function v: 2^[m] -> R>=0 with v(empty) = 0.

    Kind-specific fields:
        additive, unit_demand: values (one per item)
        xos: clauses (additive vectors, v is their max)
        table: values (2^m entries indexed by bitmask), optional class_tag
        bundle_threshold: bundles (bitmasks; v is 1 iff some bundle is contained)
        xos_lb, rrs_lb: params (analytic object with value(mask) and demand(prices))

    support_mask restricts the valuation: v|S(T) = v(T & S).
    """

    kind: str
    m: int
    values: Tuple[float, ...] = ()
    clauses: Tuple[Tuple[float, ...], ...] = ()
    bundles: Tuple[int, ...] = ()
    params: Any = None
    class_tag: Optional[str] = None
    support_mask: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PricingError(f"Unknown valuation kind: {self.kind}")
        if self.m < 1:
            raise PricingError(f"Valuation needs at least one item, got m={self.m}")
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        object.__setattr__(self, "clauses", tuple(tuple(float(x) for x in c) for c in self.clauses))
        object.__setattr__(self, "bundles", tuple(int(b) for b in self.bundles))

        if self.kind in ("additive", "unit_demand"):
            if len(self.values) != self.m:
                raise DimensionMismatchError(f"{self.kind} needs {self.m} values, got {len(self.values)}")
            if min(self.values) < 0:
                raise PricingError(f"{self.kind} values must be >= 0")
        elif self.kind == "xos":
            for clause in self.clauses:
                if len(clause) != self.m:
                    raise DimensionMismatchError(f"XOS clause needs {self.m} entries, got {len(clause)}")
                if min(clause) < 0:
                    raise PricingError("XOS clause entries must be >= 0")
        elif self.kind == "table":
            if len(self.values) != 1 << self.m:
                raise DimensionMismatchError(f"table needs {1 << self.m} values, got {len(self.values)}")
            if abs(self.values[0]) > TOL:
                raise PricingError("table value of the empty set must be 0")
            if min(self.values) < 0:
                raise PricingError("table values must be >= 0")
            if self.class_tag is not None and self.class_tag not in CLASSES:
                raise PricingError(f"Unknown class tag: {self.class_tag}")
        elif self.kind == "bundle_threshold":
            full = (1 << self.m) - 1
            for b in self.bundles:
                if b <= 0 or b & ~full:
                    raise PricingError(f"Bundle mask {b} is empty or outside [0, {self.m})")
        elif self.params is None:
            raise PricingError(f"{self.kind} valuation needs params")

    @property
    def active_mask(self) -> int:
        full = (1 << self.m) - 1
        return full if self.support_mask is None else self.support_mask & full

    def value(self, items: Union[int, Iterable[int]]) -> float:
        """v(T) for a set or bitmask T"""
        mask = as_mask(items, self.m) & self.active_mask
        kind = self.kind
        if kind == "additive":
            return float(sum(self.values[j] for j in items_of(mask)))
        if kind == "unit_demand":
            return float(max((self.values[j] for j in items_of(mask)), default=0.0))
        if kind == "xos":
            return float(max((sum(c[j] for j in items_of(mask)) for c in self.clauses), default=0.0))
        if kind == "table":
            return self.values[mask]
        if kind == "bundle_threshold":
            return 1.0 if any(b & mask == b for b in self.bundles) else 0.0
        return float(self.params.value(mask))


def restrict(v: Valuation, items: Union[int, Iterable[int]]) -> Valuation:
    """
    Restrict a valuation to an item set: v|S(T) = v(T & S).

    Args:
        v: Valuation to restrict
        items: Set S (iterable of indices or bitmask)

    Returns:
        Restricted valuation sharing v's kind and data
    """
    return replace(v, support_mask=v.active_mask & as_mask(items, v.m))


def restrict_pricing(p: ItemPricing, items: Union[int, Iterable[int]]) -> ItemPricing:
    """p with every item outside the set priced inf"""
    return p.restrict(items)


def value_table(v: Valuation, max_items: Optional[int] = None, config: Optional[Dict] = None) -> np.ndarray:
    """
    All 2^m values of v indexed by bitmask.

    Args:
        v: Valuation
        max_items: Item limit (defaults to structured_max_items)
        config: Optional configuration

    Returns:
        numpy array of length 2^m

    Raises:
        InstanceTooLargeError: If m exceeds the limit
    """
    limit = max_items if max_items is not None else get_setting(config, "structured_max_items")
    if v.m > limit:
        raise InstanceTooLargeError(f"value_table needs m <= {limit}, got {v.m}")
    bits = subset_matrix(v.m)
    masks = np.arange(1 << v.m, dtype=np.int64) & v.active_mask
    if v.kind == "table":
        return np.asarray(v.values, dtype=float)[masks]
    active = bits & ((v.active_mask >> np.arange(v.m)) & 1).astype(bool)
    if v.kind == "additive":
        return active.astype(float) @ np.asarray(v.values)
    if v.kind == "unit_demand":
        return (active * np.asarray(v.values)).max(axis=1)
    if v.kind == "xos":
        out = np.zeros(1 << v.m)
        clauses = np.asarray(v.clauses, dtype=float)
        for start in range(0, len(clauses), 128):
            chunk = active.astype(float) @ clauses[start:start + 128].T
            out = np.maximum(out, chunk.max(axis=1))
        return out
    return np.array([v.value(int(s)) for s in masks], dtype=float)


# ---------------------------------------------------------------------------
# Demand oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DemandResult:
    items: frozenset
    payment: float
    utility: float

    @property
    def mask(self) -> int:
        return sum(1 << j for j in self.items)


EMPTY_DEMAND = DemandResult(frozenset(), 0.0, 0.0)


def select_demand(candidates: Iterable[Tuple[float, float, int]]) -> Tuple[float, float, int]:
    """
    Apply the demand tie-break to (utility, payment, mask) candidates.

    Maximal utility within TOL, then maximal payment within TOL, then smallest bitmask.
    The empty set is always a candidate.
    """
    cands = [(0.0, 0.0, 0)]
    cands.extend(candidates)
    best_u = max(c[0] for c in cands)
    tied = [c for c in cands if c[0] >= best_u - TOL]
    best_p = max(c[1] for c in tied)
    return min((c for c in tied if c[1] >= best_p - TOL), key=lambda c: c[2])


def clause_set(values: Sequence[float], prices: Sequence[float], mask: int = -1) -> Tuple[float, float, int]:
    """
    Best set for one additive clause: positive-margin items plus zero-margin items with a positive price.

    Returns:
        (clause utility, payment, bitmask)
    """
    util = pay = 0.0
    chosen = 0
    for j, (a, p) in enumerate(zip(values, prices)):
        if not mask >> j & 1 or math.isinf(p):
            continue
        margin = a - p
        if margin > TOL or (margin >= -TOL and p > TOL):
            util += margin
            pay += p
            chosen |= 1 << j
    return util, pay, chosen


def exhaustive_demand(values_by_mask: np.ndarray, prices: Sequence[float]) -> DemandResult:
    """
    Brute-force demand over all 2^m bundles with the standard tie-break.

    Args:
        values_by_mask: v(T) for every bitmask T
        prices: Item prices (inf allowed)

    Returns:
        DemandResult
    """
    m = len(prices)
    values = np.asarray(values_by_mask, dtype=float)
    if len(values) != 1 << m:
        raise DimensionMismatchError(f"Need {1 << m} values for {m} items, got {len(values)}")
    p = np.asarray(prices, dtype=float)
    finite = np.isfinite(p)
    blocked = sum(1 << j for j in range(m) if not finite[j])
    masks = np.arange(1 << m, dtype=np.int64)
    pay = subset_matrix(m).astype(float) @ np.where(finite, p, 0.0)
    util = np.where((masks & blocked) == 0, values - pay, -INF)
    tied = util >= util.max() - TOL
    best_p = pay[tied].max()
    chosen = int(np.flatnonzero(tied & (pay >= best_p - TOL))[0])
    return DemandResult(items_of(chosen), float(pay[chosen]), float(util[chosen]))


def _bundle_demand(v: Valuation, prices: Tuple[float, ...]) -> DemandResult:
    cands = []
    for b in v.bundles:
        cost = sum(prices[j] for j in items_of(b))
        if math.isfinite(cost):
            cands.append((1.0 - cost, cost, b))
    u, pay, mask = select_demand(cands)
    return DemandResult(items_of(mask), pay, u)


def _structured_demand(v: Valuation, prices: Tuple[float, ...]) -> DemandResult:
    if v.kind == "table":
        return exhaustive_demand(np.asarray(v.values), prices)
    if v.kind == "unit_demand":
        cands = [
            (a - p, p, 1 << j)
            for j, (a, p) in enumerate(zip(v.values, prices))
            if math.isfinite(p) and a - p >= -TOL
        ]
        u, pay, mask = select_demand(cands)
        return DemandResult(items_of(mask), pay, u)
    clauses = (v.values,) if v.kind == "additive" else v.clauses
    cands = []
    for clause in clauses:
        _, pay, mask = clause_set(clause, prices)
        cands.append((v.value(mask) - pay, pay, mask))
    u, pay, mask = select_demand(cands)
    return DemandResult(items_of(mask), pay, u)


@lru_cache(maxsize=get_setting(None, "demand_cache_size"))
def _cached_demand(v: Valuation, prices: Tuple[float, ...]) -> DemandResult:
    if v.kind == "bundle_threshold":
        return _bundle_demand(v, prices)
    if v.kind in ANALYTIC_KINDS:
        return v.params.demand(prices)
    return _structured_demand(v, prices)


def demand(v: Valuation, p: ItemPricing, config: Optional[Dict] = None) -> DemandResult:
    """
    Demand of v under p.

    Maximizes v(T) - p(T); among maximizers takes the largest total price, then the
    smallest bitmask. Items priced inf are never bought.

    Args:
        v: Valuation
        p: Item pricing with m entries
        config: Optional configuration (item limits)

    Returns:
        DemandResult

    Raises:
        DimensionMismatchError: If p and v disagree on m
        InstanceTooLargeError: If an enumerating kind exceeds its item limit
    """
    if p.m != v.m:
        raise DimensionMismatchError(f"Pricing has {p.m} items, valuation has {v.m}")
    if v.kind == "table" and v.m > get_setting(config, "table_max_items"):
        raise InstanceTooLargeError(f"table demand needs m <= {get_setting(config, 'table_max_items')}")
    if v.kind in STRUCTURED_KINDS and v.m > get_setting(config, "structured_max_items"):
        raise InstanceTooLargeError(
            f"{v.kind} demand needs m <= {get_setting(config, 'structured_max_items')}"
        )
    prices = p.prices
    if v.support_mask is not None:
        prices = p.restrict(v.active_mask).prices
        v = replace(v, support_mask=None)
    if all(math.isinf(x) for x in prices):
        return EMPTY_DEMAND
    return _cached_demand(v, prices)


def clear_demand_cache() -> None:
    _cached_demand.cache_clear()


# ---------------------------------------------------------------------------
# Buyer distributions
# ---------------------------------------------------------------------------


class ValuationFamily(ABC):
    """Distribution over valuations of a fixed item count"""

    m: int

    @abstractmethod
    def allocation(self, p: ItemPricing) -> np.ndarray:
        """Exact purchase probability of every item under a deterministic pricing"""

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> Valuation:
        """Draw one valuation"""

    def iter_support(self) -> Iterator[Tuple[float, Valuation]]:
        raise InstanceTooLargeError(f"{type(self).__name__} has no enumerable support")


@dataclass(frozen=True)
class BuyerDistribution(ValuationFamily):
    """Explicit finite-support distribution over valuations"""

    support: Tuple[Tuple[float, Valuation], ...]

    def __post_init__(self):
        support = tuple((float(prob), v) for prob, v in self.support)
        if not support:
            raise PricingError("BuyerDistribution needs a nonempty support")
        m = support[0][1].m
        for prob, v in support:
            if prob < 0:
                raise PricingError(f"Negative valuation probability {prob}")
            if v.m != m:
                raise DimensionMismatchError("Valuations of one buyer must share m")
        total = sum(prob for prob, _ in support)
        if abs(total - 1.0) > PROB_TOL:
            raise PricingError(f"Valuation probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "support", support)

    @classmethod
    def point(cls, v: Valuation) -> "BuyerDistribution":
        return cls(((1.0, v),))

    @classmethod
    def uniform(cls, valuations: Sequence[Valuation]) -> "BuyerDistribution":
        n = len(valuations)
        return cls(tuple((1.0 / n, v) for v in valuations))

    @property
    def m(self) -> int:
        return self.support[0][1].m

    def iter_support(self) -> Iterator[Tuple[float, Valuation]]:
        return iter(self.support)

    def allocation(self, p: ItemPricing) -> np.ndarray:
        alloc = np.zeros(self.m)
        for prob, v in self.support:
            if prob == 0:
                continue
            for j in demand(v, p).items:
                alloc[j] += prob
        return alloc

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum([prob for prob, _ in self.support])

    def sample(self, rng: np.random.Generator) -> Valuation:
        k = int(np.searchsorted(self._cumulative, rng.random() * self._cumulative[-1], side="right"))
        return self.support[min(k, len(self.support) - 1)][1]


def expected_alloc(D: ValuationFamily, Q: PricingLike, available: Union[int, Iterable[int], None] = None) -> np.ndarray:
    """
    Alloc(D, Q): probability that each item is purchased.

    Args:
        D: Buyer distribution
        Q: Deterministic or random pricing
        available: Optional item set S; evaluates D|S

    Returns:
        numpy vector in [0,1]^m
    """
    Q = as_random_pricing(Q)
    if Q.m != D.m:
        raise DimensionMismatchError(f"Pricing has {Q.m} items, buyer has {D.m}")
    alloc = np.zeros(D.m)
    for prob, p in Q.support:
        if prob == 0:
            continue
        if available is not None:
            p = p.restrict(available)
        if p.is_all_inf():
            continue
        alloc += prob * D.allocation(p)
    return alloc


def expected_rev(D: ValuationFamily, Q: PricingLike, available: Union[int, Iterable[int], None] = None) -> float:
    """
    Rev(D, Q): expected payment, summed exactly over both supports.

    Args:
        D: Buyer distribution
        Q: Deterministic or random pricing
        available: Optional item set S; evaluates D|S

    Returns:
        Expected revenue
    """
    Q = as_random_pricing(Q)
    total = 0.0
    for prob, p in Q.support:
        if prob == 0:
            continue
        if available is not None:
            p = p.restrict(available)
        if p.is_all_inf():
            continue
        alloc = D.allocation(p)
        total += prob * sum(x * a for x, a in zip(p.prices, alloc) if a > 0)
    return total


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    """One checked inequality or property"""

    name: str
    passed: bool
    lhs: float = math.nan
    rhs: float = math.nan
    witness: Any = None
    detail: str = ""


@dataclass
class VerificationReport:
    name: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        if not check.passed:
            logger.debug(f"[{self.name}] check failed: {check.name} lhs={check.lhs} rhs={check.rhs}")
        return check

    def extend(self, other: "VerificationReport") -> None:
        for check in other.checks:
            self.add(replace(check, name=f"{other.name}: {check.name}"))

    def __bool__(self) -> bool:
        return self.passed


def check_geq(name: str, lhs: float, rhs: float, tol: float = TOL, witness: Any = None) -> CheckResult:
    """CheckResult for lhs >= rhs - tol"""
    return CheckResult(name, bool(lhs >= rhs - tol), float(lhs), float(rhs), witness)


def check_leq(name: str, lhs: float, rhs: float, tol: float = TOL, witness: Any = None) -> CheckResult:
    """CheckResult for lhs <= rhs + tol"""
    return CheckResult(name, bool(lhs <= rhs + tol), float(lhs), float(rhs), witness)


# ---------------------------------------------------------------------------
# Class checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassCheckResult:
    passed: bool
    witness: Optional[Tuple] = None

    def __bool__(self) -> bool:
        return self.passed


def marginal_prices(v: Valuation, config: Optional[Dict] = None) -> List[List[float]]:
    """
    Per-item marginal values v(S) - v(S without j) over all S containing j.

    Args:
        v: Valuation with m <= structured_max_items
        config: Optional configuration

    Returns:
        One sorted list per item, deduplicated within TOL
    """
    table = value_table(v, config=config)
    masks = np.arange(1 << v.m, dtype=np.int64)
    out = []
    for j in range(v.m):
        holders = masks[(masks >> j) & 1 == 1]
        out.append(dedupe(table[holders] - table[holders ^ (1 << j)]))
    return out


def dedupe(values: Iterable[float], tol: float = TOL) -> List[float]:
    """Sorted unique values, merging entries closer than tol"""
    out: List[float] = []
    for x in sorted(float(x) for x in values):
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _check_monotone(table: np.ndarray, m: int) -> ClassCheckResult:
    masks = np.arange(1 << m, dtype=np.int64)
    for j in range(m):
        without = masks[(masks >> j) & 1 == 0]
        bad = np.flatnonzero(table[without | (1 << j)] < table[without] - TOL)
        if len(bad):
            s = int(without[bad[0]])
            return ClassCheckResult(False, (items_of(s), items_of(s | 1 << j)))
    return ClassCheckResult(True)


def _check_subadditive(table: np.ndarray, m: int) -> ClassCheckResult:
    masks = np.arange(1 << m, dtype=np.int64)
    for s in range(1 << m):
        bad = np.flatnonzero(table[s] + table < table[s | masks] - TOL)
        if len(bad):
            return ClassCheckResult(False, (items_of(s), items_of(int(bad[0]))))
    return ClassCheckResult(True)


def _check_xos(v: Valuation, table: np.ndarray, config: Optional[Dict]) -> ClassCheckResult:
    from .exante import LinearProgram, lp_solve

    m = v.m
    for s in range(1, 1 << m):
        members = sorted(items_of(s))
        rows, rhs, senses = [], [], []
        rows.append([1.0] * len(members))
        rhs.append(table[s])
        senses.append("=")
        for t in range(1, 1 << len(members)):
            sub = sum(1 << members[k] for k in range(len(members)) if t >> k & 1)
            if sub == s:
                continue
            rows.append([float(t >> k & 1) for k in range(len(members))])
            rhs.append(table[sub])
            senses.append("<=")
        lp = LinearProgram(np.zeros(len(members)), np.array(rows), np.array(rhs), tuple(senses))
        if lp_solve(lp, config=config).status != "OPTIMAL":
            return ClassCheckResult(False, (items_of(s),))
    return ClassCheckResult(True)


def _check_gross_substitutes(v: Valuation, config: Optional[Dict]) -> ClassCheckResult:
    grid = [vals + [INF] for vals in (dedupe([0.0] + c) for c in marginal_prices(v, config))]
    size = math.prod(len(g) for g in grid)
    budget = get_setting(config, "candidate_budget")
    if size > budget:
        raise InstanceTooLargeError(f"GS grid has {size} pricings, budget is {budget}")
    # single-coordinate raises compose to every p <= p' on the grid
    for prices in product(*grid):
        base = demand(v, ItemPricing(prices)).items
        for j in range(v.m):
            for higher in grid[j]:
                if higher <= prices[j]:
                    continue
                raised = prices[:j] + (higher,) + prices[j + 1:]
                after = demand(v, ItemPricing(raised)).items
                lost = sorted((base - {j}) - after)
                if lost:
                    return ClassCheckResult(False, (ItemPricing(prices), ItemPricing(raised), lost[0]))
    return ClassCheckResult(True)


def check_class(v: Valuation, cls: str, config: Optional[Dict] = None) -> ClassCheckResult:
    """
    Check membership of v in a valuation class.

    monotone and subadditive are exhaustive over all pairs of bundles. xos_certified is true
    by construction for XOS-shaped kinds and otherwise solved as one supporting-clause LP per
    bundle. gross_substitutes is checked over the candidate price grid only (single-item price
    raises, which compose to every grid pair p <= p').

    Args:
        v: Valuation
        cls: One of monotone, subadditive, xos_certified, gross_substitutes
        config: Optional configuration

    Returns:
        ClassCheckResult with a witness on failure: (S, T) for set classes, (S,) for XOS,
        (p, p', j) for gross substitutes

    Raises:
        InstanceTooLargeError: If m exceeds the exhaustive limit
    """
    if cls not in CLASSES:
        raise PricingError(f"Unknown valuation class: {cls}")
    if cls == "xos_certified" and v.kind in ("additive", "unit_demand", "xos", "xos_lb", "rrs_lb"):
        return ClassCheckResult(True)
    limit = get_setting(config, "exhaustive_check_max_items")
    if cls == "xos_certified":
        limit = min(limit, get_setting(config, "xos_certify_max_items"))
    if v.m > limit:
        raise InstanceTooLargeError(f"{cls} check needs m <= {limit}, got {v.m}")
    if cls == "gross_substitutes":
        return _check_gross_substitutes(v, config)
    table = value_table(v, max_items=limit)
    if cls == "monotone":
        return _check_monotone(table, v.m)
    if cls == "subadditive":
        return _check_subadditive(table, v.m)
    return _check_xos(v, table, config)


def validate_class_tag(v: Valuation, config: Optional[Dict] = None) -> None:
    """Raise ClassCheckError when a tagged table valuation fails its declared class"""
    if v.kind != "table" or v.class_tag is None:
        return
    result = check_class(v, v.class_tag, config)
    if not result:
        raise ClassCheckError(f"table valuation fails declared class {v.class_tag}: witness {result.witness}")
