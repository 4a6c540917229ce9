"""
Verification suites for the sequential pricing lab
Handles the hull, recovery-scheme, contention-resolution and instance suites behind the
verify command
"""

import math
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import (
    TOL,
    CheckResult,
    ItemPricing,
    Valuation,
    VerificationReport,
    check_geq,
    check_leq,
    demand,
    exhaustive_demand,
    expected_alloc,
    expected_rev,
    items_of,
    value_table,
)
from .exante import solve_with_fallback
from .instances import (
    SUBADDITIVE_FAMILIES,
    gen_monotone_lb,
    gen_random_gs,
    gen_random_subadditive,
    gen_rrs_lb,
    gen_xos_lb,
    good_collection,
    rrs_lb_grid,
    xos_lb_clauses,
    xos_lb_component_utilities,
    xos_lb_validation_params,
)
from .log import logger
from .mechanisms import build_mechanism, monte_carlo
from .ocrs import HullAssumptionError, HullInput, bernoulli_availability, convex_hull_sampler, gs_decompose, rrs_to_ocrs, verify_ocrs
from .rrs import gs_rrs, pricing_mass, scaling_window, subadd_alpha, subadd_rrs, subadd_rrs_expected_rev, utility_drop, verify_rrs
from .settings import get_setting

E_FACTOR = math.e / (math.e - 1.0)
SUITES = ("hull", "rrs", "ocrs", "instances")


def _worst(report: VerificationReport, name: str, gaps: List[float], witnesses: List, tol: float = TOL) -> None:
    """One aggregated check: the smallest gap (lhs - rhs) over all samples must be >= -tol"""
    if not gaps:
        report.add(CheckResult(name, True, detail="no samples"))
        return
    k = int(np.argmin(gaps))
    report.add(CheckResult(name, gaps[k] >= -tol, gaps[k], 0.0, witnesses[k], f"{len(gaps)} samples, worst gap"))


def _slack(check: CheckResult) -> float:
    return check.rhs - check.lhs if "<=" in check.name else check.lhs - check.rhs


def _random_prices(m: int, rng: np.random.Generator, inf_rate: float = 0.2) -> ItemPricing:
    prices = np.round(rng.uniform(0.1, 3.0, m), 3)
    prices[rng.random(m) < inf_rate] = math.inf
    return ItemPricing(tuple(prices.tolist()))


def verify_hull(seed: int = 0, config: Optional[Dict] = None) -> VerificationReport:
    """Random hull inputs with both oracle assumptions enforced, plus exact gross substitutes inputs"""
    report = VerificationReport("hull")
    rng = np.random.default_rng(seed)
    dist_gaps, dom_gaps, mass_gaps, size_gaps, exact_gaps, ids = [], [], [], [], [], []
    for s in range(get_setting(config, "verify_hull_samples")):
        k = int(rng.integers(1, 9))
        w = rng.uniform(0.0, 1.0, k) * (rng.random(k) < 0.85)
        exact = bool(s % 2)
        answers: Dict[frozenset, np.ndarray] = {}

        def oracle(T: frozenset, w=w, exact=exact, answers=answers) -> np.ndarray:
            if T not in answers:
                y = np.zeros(len(w))
                members = sorted(T)
                if exact:
                    y[members] = w[members] * rng.uniform(1.0, 2.0, len(members))
                else:
                    raw = rng.uniform(0.1, 1.0, len(members))
                    scale = max(1.0, w[members].sum() / raw.sum()) * rng.uniform(1.0, 2.0)
                    y[members] = raw * scale
                answers[T] = y
            return answers[T]

        hull = convex_hull_sampler(HullInput(k, tuple(w), oracle))
        ids.append(s)
        dist_gaps.append(-abs(hull.total - 1.0))
        dom_gaps.append(float(np.min(w - hull.mixed)))
        mass_gaps.append(float(hull.mixed.sum() - (1.0 - 1.0 / math.e) * w.sum()))
        size_gaps.append(k + 1 - len(hull.support))
        if exact:
            exact_gaps.append(-float(np.abs(hull.mixed - w).max()))
    _worst(report, "lambda is a distribution", dist_gaps, ids, 1e-12)
    _worst(report, "sum lambda_T y^T <= w", dom_gaps, ids)
    _worst(report, "|sum lambda_T y^T| >= (1-1/e)|w|", mass_gaps, ids)
    _worst(report, "at most k+1 atoms", size_gaps, ids, 0)
    _worst(report, "exact decomposition when y^T >= w on T", exact_gaps, ids[1::2])
    return report


def verify_rrs_suite(seed: int = 0, config: Optional[Dict] = None) -> VerificationReport:
    """Scaling scheme bounds on random subadditive instances and the identity scheme on GS instances"""
    report = VerificationReport("rrs")
    rng = np.random.default_rng(seed)
    scaling, derand, drop, gs, ids = [], [], [], [], []
    for s in range(get_setting(config, "verify_samples")):
        m = int(rng.integers(2, 7))
        family = SUBADDITIVE_FAMILIES[s % len(SUBADDITIVE_FAMILIES)]
        D = gen_random_subadditive(m, int(rng.integers(1, 5)), family, seed + s, n=1, config=config).buyers[0]
        p = _random_prices(m, rng)
        S = int(rng.integers(0, 1 << m))
        mass = pricing_mass(D, S, p)
        window = scaling_window(p, S, m)
        ids.append((s, family))
        scaling.append(subadd_rrs_expected_rev(D, S, p) - mass / (2.0 * math.log(2.0 * window.high)))
        sub = verify_rrs(D, S, p, subadd_rrs(D, S, p), subadd_alpha(p, S, m))
        derand.append(min(map(_slack, sub.checks)))
        drop.append(min(a - b for a, b in (utility_drop(v, S, p) for _, v in D.iter_support())))
        G = gen_random_gs(m, 1, int(rng.integers(1, 4)), seed + s).buyers[0]
        gs.append(min(map(_slack, verify_rrs(G, S, p, gs_rrs(G, S, p), 1.0).checks)))
    _worst(report, "E Rev(scaled) >= mass / (2 ln(2 m aspect))", scaling, ids)
    _worst(report, "power-of-2 scheme is a 4 log2(2 m aspect) recovery", derand, ids)
    _worst(report, "utility drop >= mass/2", drop, ids)
    _worst(report, "identity scheme is a 1-recovery on gross substitutes", gs, ids)
    return report


def verify_ocrs_suite(seed: int = 0, config: Optional[Dict] = None) -> VerificationReport:
    """Contention-resolution conditions for both reductions under random availability"""
    report = VerificationReport("ocrs")
    rng = np.random.default_rng(seed)
    via_rrs, exact, subadd, ids, subadd_ids = [], [], [], [], []
    for s in range(get_setting(config, "verify_samples")):
        m = int(rng.integers(1, 5))
        D = gen_random_gs(m, 1, int(rng.integers(1, 4)), seed + s).buyers[0]
        p = _random_prices(m, rng, 0.1)
        x = expected_alloc(D, p)
        probs = rng.uniform(0.3, 1.0, m)
        S_dist = bernoulli_availability(m, probs.tolist())
        ids.append(s)
        checks = verify_ocrs(D, S_dist, x, lambda S: rrs_to_ocrs(D, S, x, p, "gs"), p, E_FACTOR).checks
        via_rrs.append(min(map(_slack, checks)))
        y = probs * x
        checks = verify_ocrs(D, S_dist, x, gs_decompose(D, S_dist, p, y), p, 1.0).checks
        exact.append(min(map(_slack, checks)))
        if m >= 2:
            family = SUBADDITIVE_FAMILIES[s % len(SUBADDITIVE_FAMILIES)]
            B = gen_random_subadditive(m, 2, family, seed + s, n=1, config=config).buyers[0]
            xb = expected_alloc(B, p)
            S = int(rng.integers(0, 1 << m))
            alpha = subadd_alpha(p, S, m) * E_FACTOR
            checks = verify_ocrs(B, S, xb, rrs_to_ocrs(B, S, xb, p, "subadd"), p, alpha).checks
            subadd.append(min(map(_slack, checks)))
            subadd_ids.append((s, family))
    _worst(report, "identity scheme reduction is an e/(e-1) contention resolution", via_rrs, ids)
    _worst(report, "exact decomposition is a 1 contention resolution", exact, ids)
    _worst(report, "scaling scheme reduction meets alpha e/(e-1)", subadd, subadd_ids)
    trials = get_setting(config, "verify_trials")
    sequential = (
        ("ocrs-seq", gen_random_subadditive(3, 2, "xos_random", seed, n=3, config=config)),
        ("gs", gen_random_gs(3, 3, 2, seed)),
    )
    for name, instance in sequential:
        sol = solve_with_fallback(instance.buyers, config=config)
        result = monte_carlo(build_mechanism(name, instance, sol, config), trials, seed, config)
        floor = 0.5 - 3.0 * np.asarray(result.availability_stderr)
        i, j = np.unravel_index(int(np.argmin(result.availability - floor)), floor.shape)
        report.add(check_geq(f"{name}: Pr[j in S_i] >= 1/2 - 3 stderr", float(result.availability[i, j]), float(floor[i, j]), 1e-9, witness=(int(i), int(j))))
    return report


def _verify_xos_lb(report: VerificationReport, seed: int, config: Optional[Dict]) -> None:
    instance, ones = gen_xos_lb(2, seed=seed, config=config)
    util_gaps, witnesses = [], []
    for i, D in enumerate(instance.buyers):
        for _, v in D.iter_support():
            util_a, util_b = xos_lb_component_utilities(v.params, ones)
            util_gaps.append(-max(abs(util_a - 32.0), abs(util_b - 32.0)))
            witnesses.append((i, sorted(items_of(v.params.A))[:3], v.params.ell))
    _worst(report, "XOS bound: Util(A) = Util(B) = 32 under unit prices", util_gaps, witnesses, 0.0)
    alloc = np.zeros(instance.m)
    value = 0.0
    for D in instance.buyers:
        a = D.allocation(ones)
        alloc += a
        value += float(a.sum())
    report.add(check_geq("XOS bound: reference revenue = 256", value, 256.0, 1e-9))
    report.add(check_leq("XOS bound: reference revenue = 256", value, 256.0, 1e-9))
    worst = int(np.argmax(np.abs(alloc - 1.0)))
    report.add(CheckResult("XOS bound: every item allocated exactly once", abs(alloc[worst] - 1.0) <= 1e-9, float(alloc[worst]), 1.0, worst))

    rng = np.random.default_rng(seed)
    mismatches, samples = [], get_setting(config, "verify_samples")
    for s in range(samples):
        k = 3
        A = rng.choice(k * k, k, replace=False).tolist()
        params = xos_lb_validation_params(k, 2, 2, A)
        table = value_table(Valuation("xos_lb", params.m, params=params), config=config)
        levels = [0.0, 0.5, 1.0, params.b_price, params.a_price, 4.0, math.inf]
        prices = tuple(float(rng.choice(levels)) for _ in range(params.m))
        analytic = params.demand(prices)
        brute = exhaustive_demand(table, prices)
        if analytic.mask != brute.mask:
            mismatches.append((s, prices))
    report.add(CheckResult("XOS bound: analytic demand matches exhaustive demand", not mismatches, len(mismatches), 0.0, mismatches[:1] or None))

    k = 4
    A = rng.choice(k * k, k, replace=False).tolist()
    params = xos_lb_validation_params(k, 2, 2, A)
    table = value_table(xos_lb_clauses(params), config=config)
    closed = np.array([params.value(s) for s in range(1 << params.m)])
    worst = int(np.argmax(np.abs(closed - table)))
    report.add(CheckResult("XOS bound m=16: closed form equals explicit clauses", abs(closed[worst] - table[worst]) <= TOL, float(closed[worst]), float(table[worst]), worst))
    levels = [0.0, 0.5, 1.0, params.b_price, params.a_price, 4.0, math.inf]
    mismatches = []
    for s in range(samples):
        prices = tuple(float(rng.choice(levels)) for _ in range(params.m))
        if params.demand(prices).mask != exhaustive_demand(table, prices).mask:
            mismatches.append((s, prices))
    report.add(CheckResult("XOS bound m=16: analytic demand matches explicit clauses", not mismatches, len(mismatches), 0.0, mismatches[:1] or None))


def _verify_monotone_lb(report: VerificationReport, seed: int, config: Optional[Dict]) -> None:
    for ell in (2, 3, 5, 7):
        try:
            good_collection(ell, validate_up_to=ell).validate()
            report.add(CheckResult(f"good collection ell={ell}: partitions and cross intersections", True))
        except ValueError as e:
            report.add(CheckResult(f"good collection ell={ell}: partitions and cross intersections", False, detail=str(e)))
    instance, reference = gen_monotone_lb(9, config=config)
    eps = instance.meta["eps"]
    N = instance.meta["N"]
    sol = solve_with_fallback(instance.buyers, reference=reference, config=config)
    report.add(check_geq("monotone bound: EARev >= N(1 - eps)", sol.value, N * (1.0 - eps), 1e-7))
    trials = get_setting(config, "verify_trials")
    for name in ("ocrs-seq", "subadd", "mono-n", "mono-m2", "mono-best"):
        try:
            result = monte_carlo(build_mechanism(name, instance, sol, config), trials, seed, config)
        except HullAssumptionError as e:
            logger.info(f"{name} does not apply to the monotone bound instance: {e}")
            report.add(CheckResult(f"monotone bound: {name} refuses non-subadditive buyers", True, detail=str(e)))
            continue
        report.add(check_leq(f"monotone bound: {name} revenue <= 1 in every transcript", result.max_revenue, 1.0, TOL))


def _verify_rrs_lb(report: VerificationReport, seed: int, config: Optional[Dict]) -> None:
    rng = np.random.default_rng(seed)
    for m in (10, 17, 26):
        family, p, S = gen_rrs_lb(m, config=config)
        target = (m - 1) / family.sigma
        mass = pricing_mass(family, S, p)
        report.add(CheckResult(f"recovery bound m={m}: reference mass = (m-1)/sigma", abs(mass - target) <= 1e-9, mass, target))
        grid = rrs_lb_grid(family, seed, get_setting(config, "rrs_lb_random_labellings"))
        revs = [expected_rev(family, q, available=S) for q in grid]
        best = int(np.argmax(revs))
        bound = 4.0 * math.sqrt(m - 1) / family.sigma
        report.add(check_leq(f"recovery bound m={m}: max grid revenue <= 4 sqrt(m-1)/sigma", revs[best], bound, TOL, witness=best))
        if family.support_size() <= 1 << 16:
            valuations = [v for _, v in family.iter_support()]
        else:
            valuations = [family.sample(rng) for _ in range(get_setting(config, "verify_samples"))]
        wrong = [(v.params.i, v.params.R) for v in valuations if demand(v, p, config).items != {v.params.i, m - 1}]
        report.add(CheckResult(f"recovery bound m={m}: demand is {{i, last}} under p", not wrong, len(wrong), 0.0, wrong[:1] or None))


def verify_instances(seed: int = 0, config: Optional[Dict] = None) -> VerificationReport:
    """Lower-bound instance identities for the XOS, monotone and recovery-scheme families"""
    report = VerificationReport("instances")
    _verify_xos_lb(report, seed, config)
    _verify_monotone_lb(report, seed, config)
    _verify_rrs_lb(report, seed, config)
    return report


SUITE_RUNNERS: Dict[str, Callable[[int, Optional[Dict]], VerificationReport]] = {
    "hull": verify_hull,
    "rrs": verify_rrs_suite,
    "ocrs": verify_ocrs_suite,
    "instances": verify_instances,
}


def run_suite(name: str, seed: int = 0, config: Optional[Dict] = None) -> List[VerificationReport]:
    """
    Run one suite or all of them.

    Args:
        name: Suite name or "all"
        seed: Master seed
        config: Optional configuration (verify_hull_samples, verify_samples, verify_trials)

    Returns:
        One report per suite run
    """
    names = SUITES if name == "all" else (name,)
    reports = []
    for suite in names:
        if suite not in SUITE_RUNNERS:
            raise ValueError(f"Unknown suite: {suite}, expected one of {', '.join(SUITES)} or all")
        logger.info(f"Running {suite} suite with seed {seed}")
        reports.append(SUITE_RUNNERS[suite](seed, config))
    return reports
