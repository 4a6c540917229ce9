"""
Report formatting utilities for the sequential pricing lab
Handles check reports, run summaries and bench CSV rows
"""

import math
from typing import Dict, List, Sequence

from .core import CheckResult, VerificationReport
from .mechanisms import MonteCarloResult

BENCH_COLUMNS = ("family", "size", "seed", "earev", "mean_revenue", "stderr", "ratio", "feasible")


def format_number(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "-"
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def format_check(check: CheckResult) -> str:
    """
    Format one check line.

    Args:
        check: Checked inequality or property

    Returns:
        Line with a pass/fail marker, both sides and the witness when one exists
    """
    marker = "✅" if check.passed else "❌"
    line = f"{marker} {check.name}"
    if not (math.isnan(check.lhs) and math.isnan(check.rhs)):
        line += f"  [{format_number(check.lhs)} vs {format_number(check.rhs)}]"
    if check.witness is not None:
        line += f"  witness={check.witness}"
    if check.detail:
        line += f"  ({check.detail})"
    return line


def format_report(report: VerificationReport, show_passed: bool = True) -> str:
    """
    Format a verification report.

    Args:
        report: Report to render
        show_passed: Also list checks that passed

    Returns:
        Header line with the pass count followed by one line per check
    """
    total = len(report.checks)
    failed = len(report.failures)
    status = "PASS" if report.passed else "FAIL"
    lines = [f"{report.name}: {status} ({total - failed}/{total} checks)"]
    for check in report.checks:
        if show_passed or not check.passed:
            lines.append(f"  {format_check(check)}")
    return "\n".join(lines)


def format_run_summary(result: MonteCarloResult, earev: float) -> str:
    """Mean revenue, standard error, the ex ante ratio and the lowest availability"""
    ratio = earev / result.mean if result.mean > 0 else math.inf
    lines = [
        f"mechanism: {result.mechanism}",
        f"trials: {result.trials} (seed {result.seed})",
        f"EARev: {format_number(earev)}",
        f"mean revenue: {format_number(result.mean)} ± {format_number(result.stderr)}",
        f"ratio: {format_number(ratio)}",
        f"skip rate: {format_number(result.skip_rate)}",
    ]
    if result.availability.size:
        i, j = divmod(int(result.availability.argmin()), result.availability.shape[1])
        lines.append(f"lowest availability: Pr[{j} in S_{i}] = {format_number(float(result.availability[i, j]))}")
    return "\n".join(lines)


def bench_row(family: str, size: int, seed: int, earev: float, result: MonteCarloResult, feasible: bool) -> Dict:
    ratio = earev / result.mean if result.mean > 0 else math.inf
    return {
        "family": family,
        "size": size,
        "seed": seed,
        "earev": format_number(earev),
        "mean_revenue": format_number(result.mean),
        "stderr": format_number(result.stderr),
        "ratio": format_number(ratio),
        "feasible": "true" if feasible else "false",
    }


def format_bench_table(rows: Sequence[Dict]) -> str:
    """Aligned plain-text table of bench rows"""
    if not rows:
        return "no bench rows"
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in BENCH_COLUMNS}
    lines: List[str] = ["  ".join(c.ljust(widths[c]) for c in BENCH_COLUMNS)]
    for row in rows:
        lines.append("  ".join(str(row[c]).ljust(widths[c]) for c in BENCH_COLUMNS))
    return "\n".join(lines)
