import math
import unittest
from pathlib import Path
import sys
import types

import numpy as np

utils_module = types.ModuleType("utils")
utils_module.__path__ = [str(Path(__file__).parent / "utils")]
sys.modules.setdefault("utils", utils_module)

import utils.formatter as formatter
from utils.core import CheckResult, VerificationReport
from utils.mechanisms import MonteCarloResult


def _result(revenues, availability=None):
    revenues = np.asarray(revenues, dtype=float)
    if availability is None:
        availability = np.array([[1.0, 1.0], [0.5, 0.75]])
    return MonteCarloResult(
        mechanism="mono-n",
        trials=len(revenues),
        seed=7,
        revenues=revenues,
        buyer_revenues=revenues.reshape(-1, 1),
        availability=availability,
        skip_rate=0.0,
        max_revenue=float(revenues.max()),
    )


class FormatNumberTests(unittest.TestCase):
    def test_special_values(self):
        self.assertEqual(formatter.format_number(math.nan), "-")
        self.assertEqual(formatter.format_number(math.inf), "inf")
        self.assertEqual(formatter.format_number(-math.inf), "-inf")

    def test_six_significant_digits(self):
        self.assertEqual(formatter.format_number(2.97), "2.97")
        self.assertEqual(formatter.format_number(1 / 3), "0.333333")
        self.assertEqual(formatter.format_number(3), "3")


class FormatReportTests(unittest.TestCase):
    def test_check_markers_and_witness(self):
        passed = formatter.format_check(CheckResult("allocation", True, 0.5, 0.5))
        failed = formatter.format_check(CheckResult("price floor", False, 0.0, 1.0, witness=1))

        self.assertTrue(passed.startswith("✅ allocation"))
        self.assertTrue(failed.startswith("❌ price floor"))
        self.assertIn("witness=1", failed)
        self.assertIn("[0 vs 1]", failed)

    def test_property_check_has_no_sides(self):
        line = formatter.format_check(CheckResult("monotone", True))

        self.assertEqual(line, "✅ monotone")

    def test_report_header_counts_passes(self):
        report = VerificationReport("rrs", [CheckResult("a", True, 1.0, 0.0), CheckResult("b", False, 0.0, 1.0)])

        full = formatter.format_report(report)
        failures_only = formatter.format_report(report, show_passed=False)

        self.assertEqual(full.splitlines()[0], "rrs: FAIL (1/2 checks)")
        self.assertEqual(len(full.splitlines()), 3)
        self.assertEqual(len(failures_only.splitlines()), 2)
        self.assertIn("❌ b", failures_only)

    def test_run_summary_names_lowest_availability(self):
        summary = formatter.format_run_summary(_result([1.0, 0.0, 1.0, 0.0]), 1.0)

        self.assertIn("mechanism: mono-n", summary)
        self.assertIn("ratio: 2", summary)
        self.assertIn("Pr[0 in S_1] = 0.5", summary)


class BenchTableTests(unittest.TestCase):
    def test_bench_row_fields(self):
        row = formatter.bench_row("xos", 4, 0, 2.0, _result([1.0, 1.0]), True)

        self.assertEqual(tuple(row), formatter.BENCH_COLUMNS)
        self.assertEqual(row["ratio"], "2")
        self.assertEqual(row["feasible"], "true")

    def test_zero_revenue_ratio_is_inf(self):
        row = formatter.bench_row("xos", 4, 0, 2.0, _result([0.0, 0.0]), False)

        self.assertEqual(row["ratio"], "inf")
        self.assertEqual(row["feasible"], "false")

    def test_table_aligns_columns(self):
        rows = [
            formatter.bench_row("coverage", 2, 0, 1.0, _result([1.0]), True),
            formatter.bench_row("xos", 6, 1, 12.5, _result([3.0]), True),
        ]

        lines = formatter.format_bench_table(rows).splitlines()

        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[1].startswith("coverage  2"))
        self.assertTrue(lines[2].startswith("xos       6"))

    def test_empty_table(self):
        self.assertEqual(formatter.format_bench_table([]), "no bench rows")


if __name__ == "__main__":
    unittest.main()
