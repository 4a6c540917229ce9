import math
import unittest
from pathlib import Path
import sys
import types

import numpy as np

utils_module = types.ModuleType("utils")
utils_module.__path__ = [str(Path(__file__).parent / "utils")]
sys.modules.setdefault("utils", utils_module)

from utils.core import BuyerDistribution, ItemPricing, Valuation, expected_rev
from utils.rrs import (
    gs_rrs,
    pricing_mass,
    scaling_candidates,
    scaling_window,
    subadd_alpha,
    subadd_rrs,
    subadd_rrs_expected_rev,
    subadd_rrs_monte_carlo,
    utility_drop,
    verify_rrs,
)


def _xos_buyer(rng, m, support=3):
    return BuyerDistribution.uniform(
        [Valuation("xos", m, clauses=[rng.uniform(0, 3, m) for _ in range(3)]) for _ in range(support)]
    )


def _random_case(rng, m):
    D = _xos_buyer(rng, m)
    p = ItemPricing(tuple(rng.uniform(0.3, 2.0, m)))
    S = int(rng.integers(1, 1 << m))
    return D, p, S


class ScalingWindowTests(unittest.TestCase):
    def test_window_ignores_zero_and_inf_prices(self):
        window = scaling_window(ItemPricing((0.0, 1.0, 4.0, math.inf)), {0, 1, 2, 3})

        self.assertEqual(window.aspect, 4.0)
        self.assertEqual(window.low, 0.5)
        self.assertEqual(window.high, 16.0)

    def test_power_of_two_candidates(self):
        window = scaling_window(ItemPricing((1.0, 2.0)), {0, 1})

        self.assertEqual(scaling_candidates(window), [0.5, 1.0, 2.0, 4.0])
        self.assertAlmostEqual(subadd_alpha(ItemPricing((1.0, 2.0)), {0, 1}), 4 * math.log2(8.0))


class ExpectedRevenueTests(unittest.TestCase):
    def test_single_item_closed_form(self):
        D = BuyerDistribution.point(Valuation("additive", 1, values=(1,)))

        rev = subadd_rrs_expected_rev(D, {0}, ItemPricing((1.0,)))

        self.assertAlmostEqual(rev, 0.5 / math.log(2), places=9)

    def test_worthless_support_earns_nothing(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(0, 0)))

        self.assertEqual(subadd_rrs_expected_rev(D, {0, 1}, ItemPricing((1.0, 2.0))), 0.0)

    def test_empty_set_earns_nothing(self):
        D = BuyerDistribution.point(Valuation("additive", 1, values=(1,)))

        self.assertEqual(subadd_rrs_expected_rev(D, set(), ItemPricing((1.0,))), 0.0)

    def test_matches_sampled_scaling(self):
        rng = np.random.default_rng(9)
        D, p, S = _random_case(rng, 3)

        exact = subadd_rrs_expected_rev(D, S, p)
        mean, stderr = subadd_rrs_monte_carlo(D, S, p, 4000, np.random.default_rng(1))

        self.assertLessEqual(abs(mean - exact), 4 * stderr + 1e-9)

    def test_scaling_bound_on_subadditive_instances(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            D, p, S = _random_case(rng, 3)
            window = scaling_window(p, S, D.m)
            with self.subTest(prices=p.prices, S=S):
                bound = pricing_mass(D, S, p) / (2 * math.log(2 * window.high))
                self.assertGreaterEqual(subadd_rrs_expected_rev(D, S, p), bound - 1e-9)


class SchemeTests(unittest.TestCase):
    def test_single_item_keeps_full_price(self):
        D = BuyerDistribution.point(Valuation("additive", 1, values=(1,)))

        self.assertEqual(subadd_rrs(D, {0}, ItemPricing((1.0,))), ItemPricing((1.0,)))

    def test_counting_valuation_keeps_full_price(self):
        D = BuyerDistribution.point(Valuation("additive", 3, values=(1, 1, 1)))
        p = ItemPricing.uniform(3, 1.0)

        q = subadd_rrs(D, {0, 1, 2}, p)

        self.assertEqual(q, p)
        self.assertAlmostEqual(expected_rev(D, q), 3.0)

    def test_empty_set_returns_reference(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(1, 1)))
        p = ItemPricing((1.0, 3.0))

        self.assertIs(subadd_rrs(D, set(), p), p)

    def test_scaling_scheme_passes_verifier(self):
        rng = np.random.default_rng(13)
        for _ in range(15):
            D, p, S = _random_case(rng, 3)
            q = subadd_rrs(D, S, p)
            with self.subTest(prices=p.prices, S=S):
                self.assertTrue(verify_rrs(D, S, p, q, subadd_alpha(p, S, D.m)).passed)
                for j in range(3):
                    if S >> j & 1:
                        self.assertGreaterEqual(q[j], p[j] / 2 - 1e-12)

    def test_identity_scheme_on_unit_demand(self):
        rng = np.random.default_rng(21)
        for _ in range(15):
            D = BuyerDistribution.uniform([Valuation("unit_demand", 3, values=rng.uniform(0, 3, 3)) for _ in range(3)])
            p = ItemPricing(tuple(rng.uniform(0.2, 2.5, 3)))
            S = {0, 2}
            with self.subTest(prices=p.prices):
                self.assertEqual(gs_rrs(D, S, p), p)
                self.assertTrue(verify_rrs(D, S, p, p, 1.0).passed)

    def test_identity_scheme_is_tight_for_additive(self):
        D = BuyerDistribution.point(Valuation("additive", 3, values=(2, 1, 3)))
        p = ItemPricing((1.0, 2.0, 2.0))

        report = verify_rrs(D, {0, 2}, p, gs_rrs(D, {0, 2}, p), 1.0)

        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.checks[1].lhs, report.checks[1].rhs)

    def test_zero_pricing_fails_price_floor(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(3, 3)))
        p = ItemPricing((1.0, 2.0))

        report = verify_rrs(D, {0, 1}, p, p.scaled(0.0), 1.0)

        self.assertFalse(report.passed)
        self.assertFalse(report.checks[0].passed)
        self.assertEqual(report.checks[0].witness, 1)

    def test_utility_drop_covers_half_the_mass(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            D, p, S = _random_case(rng, 3)
            _, v = D.support[0]
            with self.subTest(prices=p.prices, S=S):
                drop, half_mass = utility_drop(v, S, p)
                self.assertGreaterEqual(drop, half_mass - 1e-9)


if __name__ == "__main__":
    unittest.main()
