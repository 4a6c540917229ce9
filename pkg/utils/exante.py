"""
Ex ante relaxation solver for the sequential pricing lab
Handles candidate price grids, the per-buyer pricing LP and the dense simplex behind it
"""

import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    INF,
    TOL,
    CheckResult,
    DimensionMismatchError,
    InstanceTooLargeError,
    ItemPricing,
    PricingError,
    RandomPricing,
    ValuationFamily,
    VerificationReport,
    check_leq,
    dedupe,
    expected_alloc,
    expected_rev,
    marginal_prices,
)
from .log import logger
from .settings import get_setting

EXANTE_TOL = 1e-7
SENSES = ("<=", ">=", "=")

# (buyer, pricing, Rev(D_i, p), Alloc(D_i, p))
Column = Tuple[int, ItemPricing, float, np.ndarray]


class LPError(PricingError):
    """The LP solver did not reach an optimum"""


class LPSizeError(LPError):
    """LP exceeds the configured row or column limit"""


class BudgetExceededError(InstanceTooLargeError):
    """Candidate price grid exceeds the configured budget"""


# ---------------------------------------------------------------------------
# Dense simplex
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LinearProgram:
    """
    maximize objective @ x  s.t.  A[i] @ x (sense_i) b[i],  0 <= x <= upper
    """

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Tuple[str, ...]
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, len(self.objective))
        self.b = np.asarray(self.b, dtype=float)
        self.senses = tuple(self.senses)
        if len(self.b) != self.A.shape[0] or len(self.senses) != self.A.shape[0]:
            raise DimensionMismatchError(
                f"LP has {self.A.shape[0]} rows but {len(self.b)} right-hand sides and {len(self.senses)} senses"
            )
        for sense in self.senses:
            if sense not in SENSES:
                raise PricingError(f"Unknown constraint sense: {sense}")
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=float)
            if len(self.upper) != len(self.objective):
                raise DimensionMismatchError("LP upper bounds must match the variable count")


@dataclass
class LPResult:
    status: str  # OPTIMAL, UNBOUNDED, INFEASIBLE, ITERATION_LIMIT
    x: Optional[np.ndarray]
    objective: float
    iterations: int


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    piv = tab[row] / tab[row, col]
    tab -= np.outer(tab[:, col], piv)
    tab[row] = piv
    rhs = tab[:, -1]
    rhs[(rhs < 0) & (rhs > -TOL)] = 0.0


def _run_simplex(
    tab: np.ndarray,
    basis: List[int],
    cost: np.ndarray,
    allowed: np.ndarray,
    budget: int,
) -> Tuple[str, int]:
    """Primal simplex with Bland's rule on a tableau already in canonical form"""
    iterations = 0
    while True:
        reduced = cost - cost[basis] @ tab[:, :-1]
        entering = np.flatnonzero((reduced > TOL) & allowed)
        if len(entering) == 0:
            return "OPTIMAL", iterations
        if iterations >= budget:
            return "ITERATION_LIMIT", iterations
        col = int(entering[0])
        column = tab[:, col]
        rows = np.flatnonzero(column > TOL)
        if len(rows) == 0:
            return "UNBOUNDED", iterations
        ratios = tab[rows, -1] / column[rows]
        ties = rows[ratios <= ratios.min() + TOL]
        leave = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, leave, col)
        basis[leave] = col
        iterations += 1


def lp_solve(lp: LinearProgram, config: Optional[Dict] = None) -> LPResult:
    """
    Solve a dense LP with the two-phase primal simplex and Bland's anti-cycling rule.

    Args:
        lp: LinearProgram (maximization, x >= 0)
        config: Optional configuration (size limits, iteration cap)

    Returns:
        LPResult with status OPTIMAL, UNBOUNDED, INFEASIBLE or ITERATION_LIMIT

    Raises:
        LPSizeError: If the LP exceeds the configured limits
    """
    n = len(lp.objective)
    A, b, senses = lp.A.copy(), lp.b.copy(), list(lp.senses)
    if lp.upper is not None:
        bounded = [j for j in range(n) if math.isfinite(lp.upper[j])]
        if bounded:
            A = np.vstack([A, np.eye(n)[bounded]])
            b = np.concatenate([b, lp.upper[bounded]])
            senses.extend(["<="] * len(bounded))
    rows = len(b)
    if n > get_setting(config, "lp_max_columns") or rows > get_setting(config, "lp_max_rows"):
        raise LPSizeError(f"LP with {rows} rows and {n} columns exceeds configured limits")
    budget = get_setting(config, "lp_max_iterations")

    flip = {"<=": ">=", ">=": "<=", "=": "="}
    for i in range(rows):
        if b[i] < 0:
            A[i], b[i], senses[i] = -A[i], -b[i], flip[senses[i]]

    n_slack = sum(1 for s in senses if s != "=")
    art_rows = [i for i, s in enumerate(senses) if s != "<="]
    width = n + n_slack + len(art_rows)
    tab = np.zeros((rows, width + 1))
    tab[:, :n] = A
    tab[:, -1] = b
    basis = [0] * rows
    slack = n
    for i, sense in enumerate(senses):
        if sense == "<=":
            tab[i, slack] = 1.0
            basis[i] = slack
        elif sense == ">=":
            tab[i, slack] = -1.0
        if sense != "=":
            slack += 1
    artificial = np.zeros(width, dtype=bool)
    for k, i in enumerate(art_rows):
        col = n + n_slack + k
        tab[i, col] = 1.0
        basis[i] = col
        artificial[col] = True

    iterations = 0
    if art_rows:
        cost = np.where(artificial, -1.0, 0.0)
        status, used = _run_simplex(tab, basis, cost, np.ones(width, dtype=bool), budget)
        iterations += used
        if status == "ITERATION_LIMIT":
            logger.error(f"Simplex phase 1 hit the iteration cap ({budget})")
            return LPResult(status, None, math.nan, iterations)
        infeasibility = float(tab[:, -1][artificial[basis]].sum())
        if infeasibility > TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            logger.debug(f"LP infeasible, phase 1 residual {infeasibility}")
            return LPResult("INFEASIBLE", None, math.nan, iterations)
        keep = []
        for i in range(rows):
            if artificial[basis[i]]:
                pivots = np.flatnonzero((np.abs(tab[i, :-1]) > TOL) & ~artificial)
                if len(pivots) == 0:
                    # redundant equality row
                    continue
                _pivot(tab, i, int(pivots[0]))
                basis[i] = int(pivots[0])
            keep.append(i)
        tab = tab[keep]
        basis = [basis[i] for i in keep]

    cost = np.zeros(width)
    cost[:n] = lp.objective
    status, used = _run_simplex(tab, basis, cost, ~artificial, budget - iterations)
    iterations += used
    if status == "ITERATION_LIMIT":
        logger.error(f"Simplex phase 2 hit the iteration cap ({budget})")
    if status != "OPTIMAL":
        return LPResult(status, None, math.nan, iterations)
    x = np.zeros(width)
    x[basis] = tab[:, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult("OPTIMAL", x, float(lp.objective @ x), iterations)


# ---------------------------------------------------------------------------
# Ex ante relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExAnteSolution:
    """Per-buyer constraint vectors x_i, reference pricings and the objective EARev"""

    x: Tuple[Tuple[float, ...], ...]
    pricings: Tuple[RandomPricing, ...]
    value: float

    @property
    def n(self) -> int:
        return len(self.pricings)

    @property
    def x_array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)


def per_item_candidates(
    D: ValuationFamily,
    extra_grid: Sequence[float] = (),
    config: Optional[Dict] = None,
) -> List[List[float]]:
    """
    Per-item candidate prices: 0, inf, every marginal value over the support, plus extra_grid.

    Raises:
        InstanceTooLargeError: If the support cannot be enumerated or m is too large for tables
    """
    per_item: List[List[float]] = [[0.0, INF] + [float(x) for x in extra_grid] for _ in range(D.m)]
    for _, v in D.iter_support():
        for j, marginals in enumerate(marginal_prices(v, config)):
            per_item[j].extend(marginals)
    return [dedupe(values) for values in per_item]


def candidate_prices(
    D: ValuationFamily,
    extra_grid: Sequence[float] = (),
    config: Optional[Dict] = None,
) -> List[ItemPricing]:
    """
    Cartesian product of per-item candidate price sets.

    Args:
        D: Buyer distribution
        extra_grid: Additional prices offered for every item
        config: Optional configuration (candidate_budget)

    Returns:
        List of deterministic pricings

    Raises:
        BudgetExceededError: If the product exceeds candidate_budget
    """
    per_item = per_item_candidates(D, extra_grid, config)
    size = math.prod(len(values) for values in per_item)
    budget = get_setting(config, "candidate_budget")
    if size > budget:
        raise BudgetExceededError(f"Candidate grid has {size} pricings, budget is {budget}")
    return [ItemPricing(prices) for prices in product(*per_item)]


def uniform_candidates(m: int, prices: Sequence[float]) -> List[ItemPricing]:
    """Uniform pricings (every item at the same price) plus all-inf"""
    out = [ItemPricing.uniform(m, x) for x in dedupe(prices) if math.isfinite(x)]
    out.append(ItemPricing.all_inf(m))
    return out


def _column_stats(D: ValuationFamily, p: ItemPricing) -> Tuple[float, np.ndarray]:
    alloc = D.allocation(p) if not p.is_all_inf() else np.zeros(D.m)
    rev = float(sum(x * a for x, a in zip(p.prices, alloc) if a > 0))
    return rev, alloc


def build_columns(
    buyers: Sequence[ValuationFamily],
    candidates: Sequence[Sequence[ItemPricing]],
) -> List[Column]:
    """
    One LP column per distinct (buyer, pricing) with its exact revenue and allocation.

    The all-inf pricing is appended for every buyer.

    Raises:
        DimensionMismatchError: If buyers, candidate lists or pricings disagree on sizes
    """
    if len(candidates) != len(buyers):
        raise DimensionMismatchError(f"{len(buyers)} buyers but {len(candidates)} candidate lists")
    m = buyers[0].m if buyers else 0
    columns: List[Column] = []
    for i, (D, cands) in enumerate(zip(buyers, candidates)):
        if D.m != m:
            raise DimensionMismatchError("All buyers must share m")
        for p in dict.fromkeys(list(cands) + [ItemPricing.all_inf(m)]):
            if p.m != m:
                raise DimensionMismatchError(f"Candidate pricing has {p.m} items, expected {m}")
            rev, alloc = _column_stats(D, p)
            columns.append((i, p, rev, alloc))
    return columns


def solve_exante(
    buyers: Sequence[ValuationFamily],
    candidates: Sequence[Sequence[ItemPricing]],
    config: Optional[Dict] = None,
) -> ExAnteSolution:
    """
    Solve the ex ante relaxation over distributions of candidate pricings.

    max sum lambda_ip Rev(D_i, p)  s.t.  sum_p lambda_ip = 1 per buyer,
    sum_ip lambda_ip Alloc_j(D_i, p) <= 1 per item, lambda >= 0.
    The all-inf pricing is always added, so the LP is feasible.

    Args:
        buyers: Buyer distributions in order
        candidates: Candidate pricings per buyer
        config: Optional configuration

    Returns:
        ExAnteSolution with cleaned per-buyer RandomPricings

    Raises:
        LPSizeError: If the LP exceeds the configured limits
        LPError: If the solver fails to reach an optimum
    """
    columns = build_columns(buyers, candidates)
    n = len(buyers)
    m = buyers[0].m if buyers else 0
    if len(columns) > get_setting(config, "lp_max_columns"):
        raise LPSizeError(f"{len(columns)} LP columns exceed lp_max_columns")
    logger.info(f"Solving ex ante LP: {n} buyers, {m} items, {len(columns)} columns")

    A = np.zeros((n + m, len(columns)))
    objective = np.zeros(len(columns))
    for k, (i, _, rev, alloc) in enumerate(columns):
        A[i, k] = 1.0
        A[n:, k] = alloc
        objective[k] = rev
    lp = LinearProgram(objective, A, np.ones(n + m), ("=",) * n + ("<=",) * m)
    result = lp_solve(lp, config)
    if result.status != "OPTIMAL":
        raise LPError(f"Ex ante LP ended with status {result.status}")

    weights = np.where(result.x > 1e-12, result.x, 0.0)
    pricings, xs, value = [], [], 0.0
    for i in range(n):
        mine = [(weights[k], p, rev, alloc) for k, (b, p, rev, alloc) in enumerate(columns) if b == i]
        if sum(w for w, *_ in mine) <= 0:
            mine = [(1.0, p, rev, alloc) for _, p, rev, alloc in mine if p.is_all_inf()]
        pricing = RandomPricing.mix((w, p) for w, p, _, _ in mine)
        stats = {p: (rev, alloc) for _, p, rev, alloc in mine}
        x_i = np.zeros(m)
        for prob, p in pricing.support:
            rev, alloc = stats[p]
            x_i += prob * alloc
            value += prob * rev
        pricings.append(pricing)
        xs.append(tuple(float(a) for a in x_i))
    logger.info(f"Ex ante value {value:.9g} after {result.iterations} pivots")
    return ExAnteSolution(tuple(xs), tuple(pricings), float(value))


def solve_with_fallback(
    buyers: Sequence[ValuationFamily],
    extra_grid: Sequence[float] = (),
    reference: Optional[Sequence[RandomPricing]] = None,
    config: Optional[Dict] = None,
) -> ExAnteSolution:
    """
    Solve with full candidate grids when they fit, otherwise with uniform pricings.

    Stored reference pricings are always added as columns. When a buyer's product grid is
    over budget or the total exceeds the LP column limit, each buyer gets the uniform pricings
    over its per-item candidate values (or over extra_grid when marginals are unavailable).
    """
    m = buyers[0].m
    ref_columns = [[p for _, p in r.support] for r in reference] if reference else [[] for _ in buyers]
    try:
        grids = [candidate_prices(D, extra_grid, config) for D in buyers]
        if sum(len(g) for g in grids) + sum(len(r) for r in ref_columns) + len(buyers) <= get_setting(
            config, "lp_max_columns"
        ):
            return solve_exante(buyers, [g + r for g, r in zip(grids, ref_columns)], config)
        logger.warning("Candidate grid exceeds the LP column limit, falling back to uniform pricings")
    except InstanceTooLargeError as e:
        logger.warning(f"Full candidate grid unavailable ({e}), falling back to uniform pricings")
    candidates = []
    for D, refs in zip(buyers, ref_columns):
        try:
            values = [x for per_item in per_item_candidates(D, extra_grid, config) for x in per_item]
        except InstanceTooLargeError:
            values = list(extra_grid)
        candidates.append(uniform_candidates(m, values) + refs)
    return solve_exante(buyers, candidates, config)


def halve_solution(sol: ExAnteSolution) -> ExAnteSolution:
    """Mix every buyer's pricing with all-inf at weight 1/2: constraints x/2, value/2"""
    pricings = []
    for pricing in sol.pricings:
        weighted = [(0.5 * prob, p) for prob, p in pricing.support]
        weighted.append((0.5, ItemPricing.all_inf(pricing.m)))
        pricings.append(RandomPricing.mix(weighted))
    x = tuple(tuple(0.5 * a for a in row) for row in sol.x)
    return ExAnteSolution(x, tuple(pricings), 0.5 * sol.value)


def check_exante_solution(
    buyers: Sequence[ValuationFamily],
    sol: ExAnteSolution,
    tol: float = EXANTE_TOL,
) -> VerificationReport:
    """Check item feasibility, allocation domination and the objective identity"""
    report = VerificationReport("exante")
    x = sol.x_array
    for j in range(x.shape[1]):
        report.add(check_leq(f"sum_i x_i{j} <= 1", float(x[:, j].sum()), 1.0, tol, witness=j))
    total = 0.0
    for i, (D, pricing) in enumerate(zip(buyers, sol.pricings)):
        alloc = expected_alloc(D, pricing)
        gap = alloc - x[i]
        worst = int(np.argmax(gap))
        report.add(check_leq(f"Alloc(D_{i}) <= x_{i}", float(alloc[worst]), float(x[i, worst]), tol, witness=(i, worst)))
        total += expected_rev(D, pricing)
    report.add(CheckResult("value = sum_i Rev(D_i, pricings_i)", abs(total - sol.value) <= tol, sol.value, total))
    return report
