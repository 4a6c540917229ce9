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
from utils.exante import (
    BudgetExceededError,
    LinearProgram,
    build_columns,
    candidate_prices,
    check_exante_solution,
    halve_solution,
    lp_solve,
    per_item_candidates,
    solve_exante,
    solve_with_fallback,
)
from utils.instances import gen_monotone_lb


def _one_item_buyer():
    return BuyerDistribution.point(Valuation("additive", 1, values=(1,)))


class LinearProgramTests(unittest.TestCase):
    def test_single_bound(self):
        result = lp_solve(LinearProgram([1.0], [[1.0]], [1.0], ("<=",)))

        self.assertEqual(result.status, "OPTIMAL")
        self.assertAlmostEqual(result.objective, 1.0)

    def test_sum_bound(self):
        result = lp_solve(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [1.0], ("<=",)))

        self.assertAlmostEqual(result.objective, 1.0)
        self.assertAlmostEqual(float(result.x.sum()), 1.0)

    def test_equality_and_lower_bounds(self):
        lp = LinearProgram([-1.0, -2.0], [[1.0, 1.0], [0.0, 1.0]], [3.0, 1.0], ("=", ">="))

        result = lp_solve(lp)

        self.assertEqual(result.status, "OPTIMAL")
        np.testing.assert_allclose(result.x, [2.0, 1.0], atol=1e-9)
        self.assertAlmostEqual(result.objective, -4.0)

    def test_infeasible_and_unbounded(self):
        infeasible = LinearProgram([1.0], [[1.0], [1.0]], [1.0, 2.0], ("<=", ">="))
        unbounded = LinearProgram([1.0, 0.0], [[-1.0, 1.0]], [1.0], ("<=",))

        self.assertEqual(lp_solve(infeasible).status, "INFEASIBLE")
        self.assertEqual(lp_solve(unbounded).status, "UNBOUNDED")

    def test_upper_bounds(self):
        bounded = lp_solve(LinearProgram([1.0, 0.0], np.zeros((0, 2)), [], (), upper=[0.5, math.inf]))
        unbounded = lp_solve(LinearProgram([1.0, 1.0], np.zeros((0, 2)), [], (), upper=[0.5, math.inf]))

        self.assertAlmostEqual(bounded.objective, 0.5)
        self.assertEqual(unbounded.status, "UNBOUNDED")

    def test_random_lps_match_vertex_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            A = rng.uniform(0.1, 2.0, (3, 3))
            b = rng.uniform(1.0, 3.0, 3)
            c = rng.uniform(0.0, 2.0, 3)
            result = lp_solve(LinearProgram(c, A, b, ("<=",) * 3))
            rows = np.vstack([A, -np.eye(3)])
            rhs = np.concatenate([b, np.zeros(3)])
            best = 0.0
            for a in range(6):
                for b2 in range(a + 1, 6):
                    for c2 in range(b2 + 1, 6):
                        idx = [a, b2, c2]
                        M = rows[idx]
                        if abs(np.linalg.det(M)) < 1e-12:
                            continue
                        x = np.linalg.solve(M, rhs[idx])
                        if np.all(rows @ x <= rhs + 1e-9):
                            best = max(best, float(c @ x))
            with self.subTest(objective=c.tolist()):
                self.assertAlmostEqual(result.objective, best, places=7)


class CandidateTests(unittest.TestCase):
    def test_additive_marginals(self):
        D = BuyerDistribution.point(Valuation("additive", 2, values=(2, 3)))

        self.assertEqual(per_item_candidates(D), [[0.0, 2.0, math.inf], [0.0, 3.0, math.inf]])
        self.assertEqual(len(candidate_prices(D)), 9)

    def test_unit_demand_shares_candidate(self):
        D = BuyerDistribution.point(Valuation("unit_demand", 2, values=(5, 5)))

        per_item = per_item_candidates(D)

        self.assertIn(5.0, per_item[0])
        self.assertIn(5.0, per_item[1])

    def test_columns_deduplicate_and_add_all_inf(self):
        D = _one_item_buyer()

        columns = build_columns([D], [[ItemPricing((1.0,)), ItemPricing((1.0,)), ItemPricing((2.0,))]])

        self.assertEqual([p.prices for _, p, _, _ in columns], [(1.0,), (2.0,), (math.inf,)])
        self.assertEqual([rev for _, _, rev, _ in columns], [1.0, 0.0, 0.0])

    def test_budget_exceeded(self):
        D = BuyerDistribution.point(Valuation("additive", 3, values=(1, 2, 3)))

        with self.assertRaises(BudgetExceededError):
            candidate_prices(D, config={"candidate_budget": 10})


class SolveTests(unittest.TestCase):
    def test_single_buyer_single_item(self):
        D = _one_item_buyer()

        sol = solve_exante([D], [candidate_prices(D)])

        self.assertAlmostEqual(sol.value, 1.0)
        self.assertAlmostEqual(sol.x[0][0], 1.0)
        self.assertEqual(sol.pricings[0].support[0][1], ItemPricing((1.0,)))

    def test_two_identical_buyers_split_one_unit(self):
        buyers = [_one_item_buyer(), _one_item_buyer()]

        sol = solve_exante(buyers, [candidate_prices(D) for D in buyers])

        self.assertAlmostEqual(sol.value, 1.0)
        self.assertAlmostEqual(sol.x[0][0] + sol.x[1][0], 1.0)
        self.assertTrue(check_exante_solution(buyers, sol).passed)

    def test_larger_grid_never_decreases_value(self):
        rng = np.random.default_rng(4)
        buyers = [
            BuyerDistribution.uniform([Valuation("xos", 2, clauses=[rng.uniform(0, 3, 2) for _ in range(2)]) for _ in range(2)])
            for _ in range(2)
        ]
        coarse = solve_with_fallback(buyers)
        fine = solve_with_fallback(buyers, extra_grid=[0.5, 1.0, 1.5])

        self.assertGreaterEqual(fine.value, coarse.value - 1e-9)

    def test_halving_halves_value_and_constraints(self):
        buyers = [_one_item_buyer(), BuyerDistribution.point(Valuation("additive", 1, values=(2,)))]
        sol = solve_with_fallback(buyers)

        half = halve_solution(sol)

        self.assertAlmostEqual(half.value, sol.value / 2)
        np.testing.assert_allclose(half.x_array, sol.x_array / 2)
        total = sum(expected_rev(D, q) for D, q in zip(buyers, half.pricings))
        self.assertAlmostEqual(total, half.value)

    def test_monotone_lower_bound_value(self):
        instance, reference = gen_monotone_lb(9, eps=0.01)

        sol = solve_with_fallback(instance.buyers, reference=reference)

        self.assertGreaterEqual(sol.value, 2.97 - 1e-7)
        self.assertTrue(check_exante_solution(instance.buyers, sol).passed)


if __name__ == "__main__":
    unittest.main()
