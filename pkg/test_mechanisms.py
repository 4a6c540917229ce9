import unittest
from pathlib import Path
import sys
import types

import numpy as np

utils_module = types.ModuleType("utils")
utils_module.__path__ = [str(Path(__file__).parent / "utils")]
sys.modules.setdefault("utils", utils_module)

from utils.core import BuyerDistribution, ClassCheckError, ItemPricing, PricingError, Valuation, expected_rev
from utils.exante import solve_with_fallback
from utils.instances import gen_monotone_lb, gen_random_gs, gen_random_subadditive
from utils.mechanisms import (
    MECHANISMS,
    GsMechanism,
    Instance,
    MonotoneBestMechanism,
    MonotoneM2Mechanism,
    MonotoneNMechanism,
    OcrsSequentialMechanism,
    SubadditiveMechanism,
    Transcript,
    TranscriptError,
    TranscriptStep,
    TrialState,
    band_contributions,
    build_mechanism,
    gs_availability,
    high_price_check,
    high_price_pricing,
    monte_carlo,
    price_bands,
    run_monotone_n_approx,
    trial_rng,
)
from utils.ocrs import HullAssumptionError


def _one_item_instance(n=1, value=1.0):
    buyers = tuple(BuyerDistribution.point(Valuation("additive", 1, values=(value,))) for _ in range(n))
    return Instance(buyers)


def _solved(instance, reference=None):
    return solve_with_fallback(instance.buyers, reference=reference)


class PriceBandTests(unittest.TestCase):
    def test_high_band_is_halved(self):
        m, obj = 2, 1.0

        q = high_price_pricing(ItemPricing((10 * m * m * obj, 0.0)), obj, m)

        self.assertEqual(q.prices, (5 * m * m * obj, 2 * m * obj))

    def test_upper_boundary_stays_medium(self):
        m, obj = 3, 0.5
        p = ItemPricing((8 * m * m * obj,))

        self.assertEqual(price_bands(obj, m).band(p[0]), "M")
        self.assertEqual(high_price_pricing(p, obj, m)[0], 8 * m * m * obj)

    def test_bands_and_negative_objective(self):
        bands = price_bands(4.0, 2)

        self.assertEqual([bands.band(x) for x in (0.5, 1.0, 128.0, 129.0)], ["S", "M", "M", "L"])
        with self.assertRaises(PricingError):
            price_bands(-1.0, 2)

    def test_high_price_recovers_quarter_of_high_band(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            v = Valuation("xos", 2, clauses=[rng.uniform(0, 200, 2) for _ in range(2)])
            p = ItemPricing(tuple(rng.choice([1.0, 40.0, 90.0, 150.0], 2)))
            with self.subTest(prices=p.prices):
                lhs, rhs = high_price_check(v, p, 1.0, 2)
                self.assertGreaterEqual(lhs, rhs - 1e-9)

    def test_small_band_is_negligible(self):
        buyers = (
            BuyerDistribution.point(Valuation("additive", 2, values=(100.0, 0.0))),
            BuyerDistribution.point(Valuation("additive", 2, values=(0.0, 0.001))),
        )
        instance = Instance(buyers)
        sol = _solved(instance)

        contributions = band_contributions(instance, sol)

        self.assertAlmostEqual(contributions["S"], 0.001)
        self.assertLessEqual(contributions["S"], sol.value / instance.m)
        self.assertAlmostEqual(sum(contributions.values()), sol.value)


class TranscriptTests(unittest.TestCase):
    def test_valid_transcript(self):
        offer = ItemPricing((1.0, 2.0))
        transcript = Transcript(
            2,
            [
                TranscriptStep(0, frozenset({0, 1}), offer, frozenset({1}), 2.0),
                TranscriptStep(1, frozenset({0}), offer.restrict({0}), frozenset({0}), 1.0),
            ],
        )

        transcript.validate()
        self.assertEqual(transcript.revenue, 3.0)

    def test_resold_item_is_rejected(self):
        offer = ItemPricing((1.0,))
        transcript = Transcript(
            1,
            [
                TranscriptStep(0, frozenset({0}), offer, frozenset({0}), 1.0),
                TranscriptStep(1, frozenset({0}), offer, frozenset({0}), 1.0),
            ],
        )

        with self.assertRaises(TranscriptError):
            transcript.validate()

    def test_wrong_payment_is_rejected(self):
        transcript = Transcript(1, [TranscriptStep(0, frozenset({0}), ItemPricing((1.0,)), frozenset({0}), 0.5)])

        with self.assertRaises(TranscriptError):
            transcript.validate()


class MonotoneMechanismTests(unittest.TestCase):
    def test_single_buyer_gets_full_value(self):
        instance = _one_item_instance()
        sol = _solved(instance)

        transcript = run_monotone_n_approx(instance, sol, seed=3)

        self.assertAlmostEqual(transcript.revenue, sol.value)

    def test_two_identical_buyers_get_half(self):
        instance = _one_item_instance(n=2)
        result = monte_carlo(MonotoneNMechanism(instance, _solved(instance)), 4000, seed=1)

        self.assertLessEqual(abs(result.mean - 0.5), 4 * result.stderr)

    def test_uniform_price_mechanism_single_item(self):
        instance = _one_item_instance()
        sol = _solved(instance)
        mechanism = MonotoneM2Mechanism(instance, sol)

        result = monte_carlo(mechanism, 4000, seed=2)

        self.assertEqual(mechanism.j_star, 0)
        self.assertLessEqual(abs(result.mean - 0.5), 4 * result.stderr)
        self.assertGreaterEqual(result.mean, sol.value / 4)

    def test_best_mechanism_picks_by_size(self):
        instance = _one_item_instance(n=2)

        mechanism = MonotoneBestMechanism(instance, _solved(instance))

        self.assertIsInstance(mechanism.inner, MonotoneNMechanism)

    def test_lower_bound_revenue_never_exceeds_one(self):
        instance, reference = gen_monotone_lb(9, eps=0.01)
        sol = _solved(instance, reference)
        for name in ("mono-n", "mono-m2", "mono-best"):
            with self.subTest(mechanism=name):
                result = monte_carlo(build_mechanism(name, instance, sol), 300, seed=4)
                self.assertLessEqual(result.max_revenue, 1.0 + 1e-9)


class SubadditiveMechanismTests(unittest.TestCase):
    def setUp(self):
        D = BuyerDistribution(((0.01, Valuation("additive", 1, values=(100,))), (0.99, Valuation("additive", 1, values=(0,)))))
        self.instance = Instance((D,))
        self.sol = _solved(self.instance)

    def test_huge_price_lives_in_high_band(self):
        self.assertAlmostEqual(self.sol.value, 1.0)
        contributions = band_contributions(self.instance, self.sol)
        self.assertAlmostEqual(contributions["L"], 1.0)
        self.assertEqual(contributions["M"], 0.0)

    def test_high_branch_offers_half_price(self):
        mechanism = SubadditiveMechanism(self.instance, self.sol)

        offer = mechanism.offer(0, 1, trial_rng(0, 0), TrialState(branch="high"))

        self.assertEqual(offer, ItemPricing((50.0,)))
        self.assertAlmostEqual(expected_rev(self.instance.buyers[0], offer), 0.5)

    def test_medium_branch_has_nothing_to_sell(self):
        mechanism = SubadditiveMechanism(self.instance, self.sol)
        rng = trial_rng(0, 1)

        offers = [mechanism.offer(0, 1, rng, TrialState(branch="medium")) for _ in range(20)]

        self.assertEqual(offers, [None] * 20)

    def test_high_branch_keeps_all_items_half_the_time(self):
        rare = Valuation("additive", 2, values=(1e6, 1e6))
        D = BuyerDistribution(((0.002, rare), (0.998, Valuation("additive", 2, values=(0, 0)))))
        instance = Instance((D,) * 4)
        mechanism = SubadditiveMechanism(instance, _solved(instance))
        mechanism.begin = lambda rng: TrialState(branch="high")
        trials = 2000
        full = np.zeros(instance.n)

        for t in range(trials):
            for step in mechanism.run(trial_rng(3, t)).steps:
                full[step.buyer] += step.available == frozenset({0, 1})

        self.assertEqual(mechanism.bands.band(1e6), "L")
        self.assertEqual(full[0], trials)
        np.testing.assert_array_less(0.5, full / trials)

    def test_high_branch_stops_after_first_sale(self):
        instance = _one_item_instance(n=2)
        mechanism = SubadditiveMechanism(instance, _solved(instance))

        offer = mechanism.offer(1, 1, trial_rng(0, 0), TrialState(branch="high", sold=True))

        self.assertIsNone(offer)


class OcrsSequentialTests(unittest.TestCase):
    def test_availability_stays_above_half(self):
        instance = gen_random_subadditive(3, 2, "xos_random", seed=2, n=3)
        sol = _solved(instance)

        result = monte_carlo(OcrsSequentialMechanism(instance, sol), 1500, seed=5)

        self.assertTrue(np.all(result.availability >= 0.5 - 3 * result.availability_stderr - 1e-9))
        self.assertGreater(result.skip_rate, 0.3)

    def test_empty_availability_skips(self):
        instance = _one_item_instance()
        mechanism = OcrsSequentialMechanism(instance, _solved(instance))

        self.assertIsNone(mechanism.hull_offer(0, 0, ItemPricing((1.0,)), trial_rng(0, 0)))

    def test_broken_recovery_scheme_raises(self):
        instance = _one_item_instance()
        mechanism = OcrsSequentialMechanism(instance, _solved(instance), rrs=lambda D, S, p: ItemPricing.all_inf(D.m))

        with self.assertRaises(HullAssumptionError):
            monte_carlo(mechanism, 200, seed=0)

    def test_subadditive_medium_branch_propagates_hull_errors(self):
        instance = _one_item_instance()
        sol = _solved(instance)
        mechanism = SubadditiveMechanism(instance, sol, rrs=lambda D, S, p: ItemPricing.all_inf(D.m))
        rng = trial_rng(0, 0)

        with self.assertRaises(HullAssumptionError):
            for _ in range(50):
                mechanism.offer(0, 1, rng, TrialState(branch="medium"))


class GsMechanismTests(unittest.TestCase):
    def test_two_additive_buyers_earn_half(self):
        instance = _one_item_instance(n=2)
        sol = _solved(instance)

        availability = gs_availability(instance, sol)

        self.assertTrue(availability.exact)
        self.assertAlmostEqual(sum(availability.revenue), 0.5)

    def test_each_buyer_earns_half_its_ex_ante_revenue(self):
        for seed in range(4):
            instance = gen_random_gs(3, 2, 2, seed=seed)
            sol = _solved(instance)
            availability = gs_availability(instance, sol)
            with self.subTest(seed=seed):
                for i, (D, pricing) in enumerate(zip(instance.buyers, sol.pricings)):
                    self.assertAlmostEqual(availability.revenue[i], 0.5 * expected_rev(D, pricing), places=9)
                self.assertTrue(np.all(availability.item_availability(3) >= 0.5 - 1e-9))

    def test_monte_carlo_matches_exact_revenue(self):
        instance = gen_random_gs(2, 2, 2, seed=7)
        mechanism = GsMechanism(instance, _solved(instance))

        result = monte_carlo(mechanism, 3000, seed=6)

        for i in range(instance.n):
            with self.subTest(buyer=i):
                gap = abs(result.buyer_means[i] - mechanism.availability.revenue[i])
                self.assertLessEqual(gap, 4 * result.buyer_stderrs[i] + 1e-9)

    def test_presampled_availability_matches_simulation(self):
        instance = gen_random_gs(3, 4, 2, seed=3)
        config = {"gs_exact_max_buyers": 0, "gs_presample_trials": 4000}
        mechanism = GsMechanism(instance, _solved(instance), config)

        result = monte_carlo(mechanism, 3000, seed=8, config=config)

        self.assertFalse(mechanism.availability.exact)
        presampled = mechanism.availability.item_availability(3)
        np.testing.assert_allclose(result.availability, presampled, atol=0.06)
        self.assertTrue(np.all(result.availability >= 0.5 - 3 * result.availability_stderr - 1e-9))

    def test_non_gs_buyer_is_rejected(self):
        instance = Instance((BuyerDistribution.point(Valuation("bundle_threshold", 2, bundles=(0b11,))),))

        with self.assertRaises(ClassCheckError):
            GsMechanism(instance, _solved(instance))


class MonteCarloTests(unittest.TestCase):
    def test_single_trial_has_zero_stderr(self):
        instance = _one_item_instance(n=2)
        result = monte_carlo(MonotoneNMechanism(instance, _solved(instance)), 1, seed=0)

        self.assertEqual(result.stderr, 0.0)
        self.assertEqual(result.mean, float(result.revenues[0]))

    def test_seeded_runs_repeat(self):
        instance = gen_random_subadditive(3, 2, "coverage", seed=3)
        sol = _solved(instance)

        first = monte_carlo(build_mechanism("subadd", instance, sol), 200, seed=9)
        second = monte_carlo(build_mechanism("subadd", instance, sol), 200, seed=9)

        np.testing.assert_array_equal(first.revenues, second.revenues)

    def test_zero_trials_raises(self):
        instance = _one_item_instance()

        with self.assertRaises(PricingError):
            monte_carlo(MonotoneNMechanism(instance, _solved(instance)), 0)

    def test_registry_names(self):
        self.assertEqual(set(MECHANISMS), {"ocrs-seq", "subadd", "gs", "mono-n", "mono-m2", "mono-best"})
        with self.assertRaises(PricingError):
            build_mechanism("vcg", _one_item_instance(), _solved(_one_item_instance()))


if __name__ == "__main__":
    unittest.main()
