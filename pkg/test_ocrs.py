import math
import unittest
from pathlib import Path
import sys
import types

import numpy as np

utils_module = types.ModuleType("utils")
utils_module.__path__ = [str(Path(__file__).parent / "utils")]
sys.modules.setdefault("utils", utils_module)

from utils.core import BuyerDistribution, ItemPricing, PricingError, Valuation, expected_alloc, expected_rev
from utils.ocrs import (
    HullAssumptionError,
    HullInput,
    bernoulli_availability,
    convex_hull_sampler,
    gs_decompose,
    gs_decomposition,
    rrs_to_ocrs,
    verify_ocrs,
)
from utils.rrs import subadd_alpha

E_FACTOR = math.e / (math.e - 1)


def _table_oracle(table):
    return lambda T: table[T]


def _random_oracle(rng, w, gs):
    answers = {}

    def oracle(T):
        if T not in answers:
            y = np.zeros(len(w))
            members = sorted(T)
            if gs:
                y[members] = w[members] * rng.uniform(1.0, 2.0, len(members))
            else:
                raw = rng.uniform(0.0, 1.0, len(members)) + 1e-3
                y[members] = raw / raw.sum() * w[members].sum() * rng.uniform(1.0, 3.0)
            answers[T] = y
        return answers[T]

    return oracle


def _unit_demand_buyer(rng, m, support=3):
    return BuyerDistribution.uniform([Valuation("unit_demand", m, values=rng.uniform(0, 3, m)) for _ in range(support)])


class ConvexHullSamplerTests(unittest.TestCase):
    def test_single_coordinate(self):
        hull = convex_hull_sampler(HullInput(1, (1.0,), _table_oracle({frozenset({0}): (1.0,)})))

        self.assertEqual(hull.support, [(frozenset({0}), 1.0)])
        np.testing.assert_allclose(hull.mixed, [1.0])

    def test_zero_target_puts_all_mass_on_empty_set(self):
        hull = convex_hull_sampler(HullInput(3, (0.0, 0.0, 0.0), _table_oracle({})))

        self.assertEqual(hull.support, [(frozenset(), 1.0)])
        self.assertEqual(hull.queries, 0)

    def test_two_step_trace(self):
        table = {frozenset({0, 1}): (2.0, 0.0), frozenset({1}): (0.0, 1.0)}

        hull = convex_hull_sampler(HullInput(2, (1.0, 1.0), _table_oracle(table)))

        self.assertEqual(hull.support, [(frozenset({0, 1}), 0.5), (frozenset({1}), 0.5)])
        np.testing.assert_allclose(hull.mixed, [1.0, 0.5])
        self.assertGreaterEqual(hull.mixed.sum(), (1 - 1 / math.e) * 2)

    def test_random_inputs_keep_guarantees(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            k = int(rng.integers(1, 9))
            w = rng.uniform(0.0, 1.0, k) * (rng.random(k) < 0.8)
            hull = convex_hull_sampler(HullInput(k, tuple(w), _random_oracle(rng, w, gs=False)))
            with self.subTest(w=w.tolist()):
                self.assertAlmostEqual(hull.total, 1.0)
                self.assertTrue(np.all(hull.mixed <= w + 1e-9))
                self.assertGreaterEqual(hull.mixed.sum(), (1 - 1 / math.e) * w.sum() - 1e-9)
                self.assertLessEqual(hull.queries, k)
                for before, after in zip(hull.trajectory, hull.trajectory[1:]):
                    self.assertTrue(np.all(after <= before + 1e-12))

    def test_gross_substitutes_inputs_are_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            k = int(rng.integers(1, 9))
            w = rng.uniform(0.1, 1.0, k)
            hull = convex_hull_sampler(HullInput(k, tuple(w), _random_oracle(rng, w, gs=True)))
            with self.subTest(w=w.tolist()):
                np.testing.assert_allclose(hull.mixed, w, atol=1e-9)
                self.assertLessEqual(float(hull.residual.sum()), 1e-9)

    def test_oracle_mass_outside_query_raises(self):
        table = {frozenset({0}): (1.0, 1.0)}

        with self.assertRaises(HullAssumptionError) as ctx:
            convex_hull_sampler(HullInput(2, (1.0, 0.0), _table_oracle(table)))
        self.assertEqual(ctx.exception.T, frozenset({0}))

    def test_oracle_below_target_mass_raises(self):
        table = {frozenset({0, 1}): (0.5, 0.5)}

        with self.assertRaises(HullAssumptionError):
            convex_hull_sampler(HullInput(2, (1.0, 1.0), _table_oracle(table)))


class ReductionTests(unittest.TestCase):
    def test_empty_available_set_gives_all_inf(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(2, 2)))
        p = ItemPricing((1.0, 1.0))

        output = rrs_to_ocrs(D, set(), expected_alloc(D, p), p)

        self.assertEqual(output.support, ((1.0, ItemPricing.all_inf(2)),))
        self.assertEqual(expected_rev(D, output), 0.0)

    def test_identity_scheme_recovers_reference_on_full_set(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            D = _unit_demand_buyer(rng, 3)
            p = ItemPricing(tuple(rng.uniform(0.2, 2.5, 3)))
            x = expected_alloc(D, p)
            output = rrs_to_ocrs(D, {0, 1, 2}, x, p, rrs="gs", alpha=1.0)
            with self.subTest(prices=p.prices):
                np.testing.assert_allclose(expected_alloc(D, output), x, atol=1e-9)
                self.assertAlmostEqual(expected_rev(D, output), float(np.dot(p.prices, x)))

    def test_identity_scheme_passes_with_e_factor(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            D = _unit_demand_buyer(rng, 3)
            p = ItemPricing(tuple(rng.uniform(0.2, 2.5, 3)))
            S = frozenset(j for j in range(3) if rng.random() < 0.7)
            x = expected_alloc(D, p)
            output = rrs_to_ocrs(D, S, x, p, rrs="gs")
            with self.subTest(prices=p.prices, S=sorted(S)):
                self.assertTrue(verify_ocrs(D, S, x, output, p, E_FACTOR).passed)

    def test_scaling_scheme_passes_with_combined_factor(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            D = BuyerDistribution.uniform(
                [Valuation("xos", 3, clauses=[rng.uniform(0, 3, 3) for _ in range(2)]) for _ in range(3)]
            )
            p = ItemPricing(tuple(rng.uniform(0.5, 2.0, 3)))
            S = frozenset(j for j in range(3) if rng.random() < 0.7)
            x = expected_alloc(D, p)
            output = rrs_to_ocrs(D, S, x, p)
            alpha = subadd_alpha(p, S, 3) * E_FACTOR
            with self.subTest(prices=p.prices, S=sorted(S)):
                self.assertTrue(verify_ocrs(D, S, x, output, p, alpha).passed)

    def test_overscaled_output_breaks_allocation(self):
        D = BuyerDistribution.uniform([Valuation("additive", 2, values=(1, 1)), Valuation("additive", 2, values=(0.3, 0.3))])
        p = ItemPricing((1.0, 1.0))
        x = expected_alloc(D, p)

        report = verify_ocrs(D, {0, 1}, x, p.scaled(0.1), p, 1.0)

        self.assertFalse(report.checks[0].passed)
        self.assertEqual(report.checks[0].witness, 0)

    def test_all_inf_output_with_zero_reference(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(1, 1)))

        report = verify_ocrs(D, {0, 1}, (0.0, 0.0), ItemPricing.all_inf(2), ItemPricing.all_inf(2), 1.0)

        self.assertTrue(report.passed)


class GsDecomposeTests(unittest.TestCase):
    def test_full_target_keeps_revenue(self):
        rng = np.random.default_rng(12)
        D = _unit_demand_buyer(rng, 3)
        p = ItemPricing(tuple(rng.uniform(0.2, 2.5, 3)))
        w = expected_alloc(D, p, available={0, 1})

        q = gs_decompose(D, {0, 1}, p, w)

        np.testing.assert_allclose(expected_alloc(D, q, available={0, 1}), w, atol=1e-9)
        self.assertAlmostEqual(expected_rev(D, q, available={0, 1}), float(np.dot(np.where(w > 0, p.prices, 0.0), w)))

    def test_half_target_halves_allocation_under_random_availability(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            D = _unit_demand_buyer(rng, 3)
            p = ItemPricing(tuple(rng.uniform(0.2, 2.5, 3)))
            S_dist = bernoulli_availability(3, rng.uniform(0.5, 1.0, 3))
            w = sum(prob * expected_alloc(D, p, available=S) for prob, S in S_dist)
            q, hull = gs_decomposition(D, S_dist, p, w / 2)
            alloc = sum(prob * expected_alloc(D, q, available=S) for prob, S in S_dist)
            with self.subTest(prices=p.prices):
                np.testing.assert_allclose(alloc, w / 2, atol=1e-9)
                self.assertLessEqual(float(hull.residual.sum()), 1e-9)
                self.assertTrue(verify_ocrs(D, S_dist, w / 2, q, p, 2.0).passed)

    def test_target_above_allocation_raises(self):
        D = BuyerDistribution.point(Valuation("additive", 1, values=(1,)))

        with self.assertRaises(PricingError):
            gs_decompose(D, {0}, ItemPricing((2.0,)), (0.5,))


if __name__ == "__main__":
    unittest.main()
