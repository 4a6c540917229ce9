"""
Sequential mechanisms for the sequential pricing lab
Handles the contention-resolution mechanism, the subadditive coin-flip mechanism with price
bands, the gross substitutes halving mechanism, the monotone mechanisms and the Monte Carlo
harness
"""

import math
from abc import ABC, abstractmethod
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .core import (
    TOL,
    ClassCheckError,
    DimensionMismatchError,
    ItemPricing,
    PricingError,
    RandomPricing,
    Valuation,
    ValuationFamily,
    check_class,
    demand,
    expected_alloc,
    items_of,
)
from .exante import ExAnteSolution
from .log import logger
from .ocrs import HullAssumptionError, gs_decompose, ocrs_hull
from .settings import get_setting

SeedLike = Union[int, np.random.Generator]


class TranscriptError(PricingError):
    """A transcript breaks ex post feasibility"""


@dataclass(frozen=True)
class Instance:
    """m items and an ordered list of buyer distributions"""

    buyers: Tuple[ValuationFamily, ...]
    meta: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        buyers = tuple(self.buyers)
        if not buyers:
            raise PricingError("Instance needs at least one buyer")
        if any(D.m != buyers[0].m for D in buyers):
            raise DimensionMismatchError("All buyers of an instance must share m")
        if any(not 0 <= j < buyers[0].m for j in self.meta.get("available", ())):
            raise DimensionMismatchError(f"Available items {self.meta['available']} fall outside {buyers[0].m} items")
        object.__setattr__(self, "buyers", buyers)

    @property
    def m(self) -> int:
        return self.buyers[0].m

    @property
    def n(self) -> int:
        return len(self.buyers)

    @property
    def full_mask(self) -> int:
        return (1 << self.m) - 1

    @property
    def initial_mask(self) -> int:
        """S_1: the items listed under meta["available"], all items otherwise"""
        if "available" not in self.meta:
            return self.full_mask
        return sum(1 << j for j in set(self.meta["available"]))


# ---------------------------------------------------------------------------
# Transcripts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptStep:
    buyer: int
    available: frozenset
    offer: ItemPricing
    purchased: frozenset
    payment: float
    skipped: bool = False


@dataclass
class Transcript:
    """Realized run: available sets, offers, purchases and payments in buyer order"""

    m: int
    steps: List[TranscriptStep] = field(default_factory=list)
    initial: Optional[frozenset] = None

    @property
    def revenue(self) -> float:
        return float(sum(step.payment for step in self.steps))

    @property
    def payments(self) -> List[float]:
        return [step.payment for step in self.steps]

    def validate(self) -> None:
        """
        Raise TranscriptError unless B_i is within S_i, S_{i+1} = S_i - B_i and S_1 = initial
        (all m items when unset).
        """
        available = frozenset(range(self.m)) if self.initial is None else frozenset(self.initial)
        for step in self.steps:
            if step.available != available:
                raise TranscriptError(f"Buyer {step.buyer} saw {sorted(step.available)}, expected {sorted(available)}")
            if not step.purchased <= step.available:
                raise TranscriptError(f"Buyer {step.buyer} bought unavailable items {sorted(step.purchased - step.available)}")
            paid = step.offer.price_of(step.purchased) if step.purchased else 0.0
            if not math.isfinite(paid) or abs(paid - step.payment) > TOL * max(1.0, paid):
                raise TranscriptError(f"Buyer {step.buyer} paid {step.payment}, offer charges {paid}")
            available = available - step.purchased


@dataclass
class TrialState:
    branch: str = ""
    chosen: Optional[int] = None
    sold: bool = False


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial: counter-based split of the master seed"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _as_rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else trial_rng(int(seed), 0)


# ---------------------------------------------------------------------------
# Mechanisms
# ---------------------------------------------------------------------------


class Mechanism(ABC):
    """
    Sequential item pricing over the instance's buyer order.

    Subclasses decide each buyer's offer; run() samples valuations, computes demand over the
    items still available and maintains S_i.
    """

    name = ""

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None):
        if exante.n != instance.n:
            raise DimensionMismatchError(f"Ex ante solution has {exante.n} buyers, instance has {instance.n}")
        if any(r.m != instance.m for r in exante.pricings):
            raise DimensionMismatchError("Ex ante pricings do not match the instance item count")
        self.instance = instance
        self.exante = exante
        self.config = config
        self.validate_transcripts = get_setting(config, "validate_transcripts")

    def begin(self, rng: np.random.Generator) -> TrialState:
        return TrialState()

    @abstractmethod
    def offer(self, i: int, available: int, rng: np.random.Generator, state: TrialState) -> Optional[ItemPricing]:
        """Pricing for buyer i facing the available bitmask, or None to skip the buyer"""

    def run(self, rng: np.random.Generator) -> Transcript:
        instance = self.instance
        available = instance.initial_mask
        transcript = Transcript(instance.m, initial=items_of(available))
        state = self.begin(rng)
        for i, D in enumerate(instance.buyers):
            S = items_of(available)
            offered = self.offer(i, available, rng, state)
            if offered is not None:
                offered = offered.restrict(available)
            if offered is None or offered.is_all_inf():
                transcript.steps.append(TranscriptStep(i, S, ItemPricing.all_inf(instance.m), frozenset(), 0.0, True))
                continue
            v = D.sample(rng)
            result = demand(v, offered, self.config)
            transcript.steps.append(TranscriptStep(i, S, offered, result.items, result.payment))
            if result.items:
                state.sold = True
                available &= ~result.mask
        if self.validate_transcripts:
            transcript.validate()
        return transcript


@dataclass
class _HullPlan:
    sets: List[frozenset]
    cumulative: np.ndarray
    offers: Dict[frozenset, ItemPricing]

    def sample(self, rng: np.random.Generator) -> Optional[ItemPricing]:
        k = int(np.searchsorted(self.cumulative, rng.random() * self.cumulative[-1], side="right"))
        T = self.sets[min(k, len(self.sets) - 1)]
        return self.offers[T] if T else None


class OcrsSequentialMechanism(Mechanism):
    """
    Skip each buyer with probability 1/2; otherwise sample p_i from the ex ante pricing and
    offer the contention-resolution pricing built from the recovery scheme on S_i.

    A buyer whose hull oracle breaks its assumptions (non-subadditive valuations) raises
    HullAssumptionError out of run().
    """

    name = "ocrs-seq"

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None, rrs: str = "subadd"):
        super().__init__(instance, exante, config)
        self.rrs = rrs
        self._plans: Dict[Tuple[int, int, ItemPricing], _HullPlan] = {}

    def hull_plan(self, i: int, S: int, p: ItemPricing) -> _HullPlan:
        key = (i, S, p)
        if key not in self._plans:
            try:
                hull, offers = ocrs_hull(self.instance.buyers[i], S, p, self.rrs)
            except HullAssumptionError as e:
                logger.error(f"Hull oracle failed for buyer {i} on {sorted(items_of(S))}: {e}")
                raise
            sets = [T for T, _ in hull.support]
            cumulative = np.cumsum([lam for _, lam in hull.support])
            self._plans[key] = _HullPlan(sets, cumulative, offers)
        return self._plans[key]

    def hull_offer(self, i: int, S: int, p: ItemPricing, rng: np.random.Generator) -> Optional[ItemPricing]:
        return self.hull_plan(i, S, p).sample(rng)

    def offer(self, i, available, rng, state):
        if rng.random() < 0.5:
            return None
        p = self.exante.pricings[i].sample(rng)
        return self.hull_offer(i, available, p, rng)


@dataclass(frozen=True)
class PriceBands:
    """S = [0, Obj/m^2), M = [Obj/m^2, 8 m^2 Obj], L = (8 m^2 Obj, inf)"""

    obj: float
    m: int

    @property
    def low(self) -> float:
        return self.obj / self.m**2

    @property
    def high(self) -> float:
        return 8.0 * self.m**2 * self.obj

    def band(self, price: float) -> str:
        if price < self.low:
            return "S"
        if price <= self.high:
            return "M"
        return "L"

    def medium_mask(self, p: ItemPricing) -> int:
        return sum(1 << j for j, x in enumerate(p) if math.isfinite(x) and self.band(x) == "M")


def price_bands(obj: float, m: int) -> PriceBands:
    if obj < 0:
        raise PricingError(f"Obj must be >= 0, got {obj}")
    return PriceBands(float(obj), m)


def high_price_pricing(p: ItemPricing, obj: float, m: int) -> ItemPricing:
    """q_j = p_j/2 on the high band, max(p_j, 2 m Obj) elsewhere"""
    bands = price_bands(obj, m)
    floor = 2.0 * m * obj
    return ItemPricing(tuple(x / 2.0 if bands.band(x) == "L" else max(x, floor) for x in p))


def high_price_check(v: Valuation, p: ItemPricing, obj: float, m: int, config: Optional[Dict] = None) -> Tuple[float, float]:
    """
    Both sides of q(T') >= p(T & L)/4 with T the demand under p and T' the demand under q.
    """
    bands = price_bands(obj, m)
    q = high_price_pricing(p, obj, m)
    T = demand(v, p, config).items
    T_prime = demand(v, q, config).items
    high = [j for j in T if bands.band(p[j]) == "L"]
    return q.price_of(T_prime) if T_prime else 0.0, 0.25 * sum(p[j] for j in high)


def band_contributions(instance: Instance, exante: ExAnteSolution) -> Dict[str, float]:
    """Exact split of the ex ante revenue by the band of each item's price"""
    bands = price_bands(exante.value, instance.m)
    out = {"S": 0.0, "M": 0.0, "L": 0.0}
    for D, pricing in zip(instance.buyers, exante.pricings):
        for prob, p in pricing.support:
            if prob <= 0 or p.is_all_inf():
                continue
            alloc = D.allocation(p)
            for j, x in enumerate(p):
                if alloc[j] > 0:
                    out[bands.band(x)] += prob * x * alloc[j]
    return out


class SubadditiveMechanism(Mechanism):
    """
    Fair coin between the medium and the high branch.

    Medium: the contention-resolution mechanism restricted to S_i & M(p_i).
    High: offer the high-price pricing until the first sale, then skip everyone.
    """

    name = "subadd"

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None, rrs: str = "subadd"):
        super().__init__(instance, exante, config)
        self.bands = price_bands(exante.value, instance.m)
        self._medium = OcrsSequentialMechanism(instance, exante, config, rrs)

    def begin(self, rng):
        return TrialState(branch="medium" if rng.random() < 0.5 else "high")

    def offer(self, i, available, rng, state):
        if state.branch == "medium":
            if rng.random() < 0.5:
                return None
            p = self.exante.pricings[i].sample(rng)
            return self._medium.hull_offer(i, available & self.bands.medium_mask(p), p, rng)
        if state.sold:
            return None
        p = self.exante.pricings[i].sample(rng)
        return high_price_pricing(p, self.bands.obj, self.instance.m)


# ---------------------------------------------------------------------------
# Gross substitutes
# ---------------------------------------------------------------------------


@dataclass
class GsAvailability:
    """Availability distribution of S_i, decomposition plans and expected revenue per buyer"""

    availability: List[List[Tuple[float, int]]]
    plans: List[Dict[ItemPricing, RandomPricing]]
    revenue: List[float]
    exact: bool

    def item_availability(self, m: int) -> np.ndarray:
        """Pr[j in S_i] as an n x m matrix"""
        out = np.zeros((len(self.availability), m))
        for i, dist in enumerate(self.availability):
            for prob, S in dist:
                for j in items_of(S):
                    out[i, j] += prob
        return out


def _check_gs_buyers(instance: Instance, config: Optional[Dict]) -> None:
    for i, D in enumerate(instance.buyers):
        for _, v in D.iter_support():
            if v.kind in ("additive", "unit_demand"):
                continue
            result = check_class(v, "gross_substitutes", config)
            if not result:
                raise ClassCheckError(f"Buyer {i} is not gross substitutes, witness {result.witness}")


def _buyer_plan(D: ValuationFamily, pairs: List[Tuple[float, int]], pricing: RandomPricing, clip: bool) -> Dict[ItemPricing, RandomPricing]:
    plan = {}
    for prob, p in pricing.support:
        if prob <= 0:
            continue
        y = 0.5 * expected_alloc(D, p)
        if clip:
            w = sum(q * expected_alloc(D, p, available=S) for q, S in pairs)
            y = np.minimum(y, w)
        plan[p] = gs_decompose(D, pairs, p, y)
    return plan


def gs_availability(
    instance: Instance,
    exante: ExAnteSolution,
    config: Optional[Dict] = None,
    exact: Optional[bool] = None,
    seed: int = 0,
) -> GsAvailability:
    """
    Decomposition plans of the halving mechanism with the availability they induce.

    Exact mode propagates the distribution of S_i buyer by buyer over every valuation,
    pricing and decomposition atom. Otherwise the distribution of S_i is estimated from
    gs_presample_trials simulated prefixes, and targets are clipped to the estimated
    allocation.

    Args:
        instance: Gross substitutes instance
        exante: Ex ante solution
        config: Optional configuration (gs_exact_max_buyers, gs_presample_trials)
        exact: Force exact (True) or presampled (False) availability
        seed: Presampling seed

    Returns:
        GsAvailability
    """
    if exact is None:
        exact = instance.n <= get_setting(config, "gs_exact_max_buyers")
    start = instance.initial_mask
    plans, availability, revenue = [], [], []
    if exact:
        dist: Dict[int, float] = {start: 1.0}
        for i, D in enumerate(instance.buyers):
            pairs = [(prob, S) for S, prob in dist.items()]
            plan = _buyer_plan(D, pairs, exante.pricings[i], clip=False)
            following: Dict[int, float] = defaultdict(float)
            rev = 0.0
            for prob_S, S in pairs:
                for lam, p in exante.pricings[i].support:
                    if p not in plan:
                        following[S] += prob_S * lam
                        continue
                    for mu, q in plan[p].support:
                        offered = q.restrict(S)
                        weight = prob_S * lam * mu
                        if offered.is_all_inf():
                            following[S] += weight
                            continue
                        for pi, v in D.iter_support():
                            result = demand(v, offered, config)
                            following[S & ~result.mask] += weight * pi
                            rev += weight * pi * result.payment
            availability.append(pairs)
            plans.append(plan)
            revenue.append(rev)
            dist = dict(following)
        return GsAvailability(availability, plans, revenue, True)

    trials = get_setting(config, "gs_presample_trials")
    rng = trial_rng(seed, 0)
    states = [start] * trials
    for i, D in enumerate(instance.buyers):
        pairs = [(count / trials, S) for S, count in sorted(Counter(states).items())]
        plan = _buyer_plan(D, pairs, exante.pricings[i], clip=True)
        paid = 0.0
        for t, S in enumerate(states):
            p = exante.pricings[i].sample(rng)
            if p not in plan:
                continue
            offered = plan[p].sample(rng).restrict(S)
            if offered.is_all_inf():
                continue
            result = demand(D.sample(rng), offered, config)
            states[t] = S & ~result.mask
            paid += result.payment
        availability.append(pairs)
        plans.append(plan)
        revenue.append(paid / trials)
    logger.info(f"Presampled gross substitutes availability over {trials} prefixes")
    return GsAvailability(availability, plans, revenue, False)


class GsMechanism(Mechanism):
    """
    Sample p_i and offer the exact decomposition of y_i = Alloc(D_i, p_i)/2 against the
    availability distribution of S_i; each buyer contributes exactly half its ex ante revenue.
    """

    name = "gs"

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None, seed: int = 0):
        super().__init__(instance, exante, config)
        _check_gs_buyers(instance, config)
        self.availability = gs_availability(instance, exante, config, seed=seed)

    def offer(self, i, available, rng, state):
        p = self.exante.pricings[i].sample(rng)
        plan = self.availability.plans[i]
        if p not in plan:
            return None
        return plan[p].sample(rng)


# ---------------------------------------------------------------------------
# Monotone
# ---------------------------------------------------------------------------


class MonotoneNMechanism(Mechanism):
    """Serve one uniformly random buyer with its ex ante pricing; revenue value/n in expectation"""

    name = "mono-n"

    def begin(self, rng):
        return TrialState(chosen=int(rng.integers(self.instance.n)))

    def offer(self, i, available, rng, state):
        if i != state.chosen:
            return None
        return self.exante.pricings[i].sample(rng)


class MonotoneM2Mechanism(Mechanism):
    """
    Uniform price p_ij*/m on every item while all items are unsold.

    j* maximizes the ex ante revenue collected on one item. Buyer i is rejected with
    probability 1 - Alloc_j*(D_i, p_i)/(2 lambda_i), lambda_i the probability of buying
    anything at the uniform price.
    """

    name = "mono-m2"

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None):
        super().__init__(instance, exante, config)
        m = instance.m
        per_item = np.zeros(m)
        allocations: Dict[Tuple[int, ItemPricing], np.ndarray] = {}
        for i, (D, pricing) in enumerate(zip(instance.buyers, exante.pricings)):
            for prob, p in pricing.support:
                if prob <= 0 or p.is_all_inf():
                    continue
                alloc = D.allocation(p)
                allocations[(i, p)] = alloc
                per_item += [prob * x * a if a > 0 else 0.0 for x, a in zip(p, alloc)]
        self.j_star = int(np.argmax(per_item))
        self._uniform: Dict[Tuple[int, ItemPricing], Tuple[ItemPricing, float]] = {}
        for (i, p), alloc in allocations.items():
            price = p[self.j_star] / m
            if not math.isfinite(price):
                continue
            uniform = ItemPricing.uniform(m, price)
            buys = sum(prob for prob, v in instance.buyers[i].iter_support() if demand(v, uniform, config).items)
            target = alloc[self.j_star]
            if buys <= 0:
                if target > 0:
                    logger.debug(f"Buyer {i} never buys at uniform price {price:.6g}, skipping")
                continue
            self._uniform[(i, p)] = (uniform, min(1.0, target / (2.0 * buys)))
        logger.debug(f"mono-m2 picked j*={self.j_star} with ex ante revenue {per_item[self.j_star]:.6g}")

    def offer(self, i, available, rng, state):
        if available != self.instance.initial_mask:
            return None
        p = self.exante.pricings[i].sample(rng)
        if (i, p) not in self._uniform:
            return None
        uniform, accept = self._uniform[(i, p)]
        if rng.random() >= accept:
            return None
        return uniform


class MonotoneBestMechanism(Mechanism):
    """The n-approximation when n <= 4 m^2, the 4 m^2-approximation otherwise"""

    name = "mono-best"

    def __init__(self, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None):
        super().__init__(instance, exante, config)
        if instance.n <= 4 * instance.m**2:
            self.inner: Mechanism = MonotoneNMechanism(instance, exante, config)
        else:
            self.inner = MonotoneM2Mechanism(instance, exante, config)

    def begin(self, rng):
        return self.inner.begin(rng)

    def offer(self, i, available, rng, state):
        return self.inner.offer(i, available, rng, state)


MECHANISMS = {
    cls.name: cls
    for cls in (
        OcrsSequentialMechanism,
        SubadditiveMechanism,
        GsMechanism,
        MonotoneNMechanism,
        MonotoneM2Mechanism,
        MonotoneBestMechanism,
    )
}


def build_mechanism(name: str, instance: Instance, exante: ExAnteSolution, config: Optional[Dict] = None) -> Mechanism:
    if name not in MECHANISMS:
        raise PricingError(f"Unknown mechanism: {name}, expected one of {', '.join(MECHANISMS)}")
    return MECHANISMS[name](instance, exante, config)


def run_ocrs_sequential(instance: Instance, exante: ExAnteSolution, seed: SeedLike = 0, rrs: str = "subadd", config: Optional[Dict] = None) -> Transcript:
    return OcrsSequentialMechanism(instance, exante, config, rrs).run(_as_rng(seed))


def run_subadditive_mechanism(instance: Instance, exante: ExAnteSolution, seed: SeedLike = 0, config: Optional[Dict] = None) -> Transcript:
    return SubadditiveMechanism(instance, exante, config).run(_as_rng(seed))


def run_gs_mechanism(instance: Instance, exante: ExAnteSolution, seed: SeedLike = 0, config: Optional[Dict] = None) -> Transcript:
    return GsMechanism(instance, exante, config).run(_as_rng(seed))


def run_monotone_n_approx(instance: Instance, exante: ExAnteSolution, seed: SeedLike = 0, config: Optional[Dict] = None) -> Transcript:
    return MonotoneNMechanism(instance, exante, config).run(_as_rng(seed))


def run_monotone_m2_approx(instance: Instance, exante: ExAnteSolution, seed: SeedLike = 0, config: Optional[Dict] = None) -> Transcript:
    return MonotoneM2Mechanism(instance, exante, config).run(_as_rng(seed))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class MonteCarloResult:
    mechanism: str
    trials: int
    seed: int
    revenues: np.ndarray
    buyer_revenues: np.ndarray  # trials x n
    availability: np.ndarray  # n x m, empirical Pr[j in S_i]
    skip_rate: float
    max_revenue: float = 0.0

    @property
    def mean(self) -> float:
        return float(self.revenues.mean())

    @property
    def stderr(self) -> float:
        return _stderr(self.revenues)

    @property
    def buyer_means(self) -> np.ndarray:
        return self.buyer_revenues.mean(axis=0)

    @property
    def buyer_stderrs(self) -> np.ndarray:
        return np.array([_stderr(col) for col in self.buyer_revenues.T])

    @property
    def availability_stderr(self) -> np.ndarray:
        return np.sqrt(self.availability * (1.0 - self.availability) / self.trials)


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def monte_carlo(mechanism: Mechanism, trials: int, seed: int = 0, config: Optional[Dict] = None) -> MonteCarloResult:
    """
    Run independent seeded trials of a mechanism.

    Trial t draws from trial_rng(seed, t), so results do not depend on trial order.

    Args:
        mechanism: Built mechanism
        trials: Number of trials (>= 1)
        seed: Master seed
        config: Optional configuration (show_progress)

    Returns:
        MonteCarloResult with revenue statistics and the availability matrix
    """
    if trials < 1:
        raise PricingError(f"trials must be >= 1, got {trials}")
    n, m = mechanism.instance.n, mechanism.instance.m
    revenues = np.zeros(trials)
    buyer_revenues = np.zeros((trials, n))
    availability = np.zeros((n, m))
    skipped = 0
    iterator = range(trials)
    if get_setting(config, "show_progress"):
        iterator = tqdm(iterator, desc=mechanism.name, unit="trial")
    for t in iterator:
        transcript = mechanism.run(trial_rng(seed, t))
        for step in transcript.steps:
            buyer_revenues[t, step.buyer] = step.payment
            skipped += step.skipped
            for j in step.available:
                availability[step.buyer, j] += 1
        revenues[t] = transcript.revenue
    logger.info(f"{mechanism.name}: {trials} trials, mean revenue {revenues.mean():.6g}")
    return MonteCarloResult(
        mechanism.name,
        trials,
        seed,
        revenues,
        buyer_revenues,
        availability / trials,
        skipped / (trials * n),
        float(revenues.max()),
    )
