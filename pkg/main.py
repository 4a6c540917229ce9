"""
Sequential item pricing lab
Generates instances, solves the ex ante relaxation, simulates sequential mechanisms, runs the
verification suites and emits plot-ready benches
"""

import argparse
import csv
import json
import logging
import math
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from utils import exante, formatter, instance_storage, instances, mechanisms, settings, verify
from utils.core import PricingError, RandomPricing, VerificationReport
from utils.log import logger

FAMILIES = ("xos-lb", "monotone-lb", "rrs-lb", "subadditive", "gs")
BENCH_FAMILIES = {
    "subadditive": "subadd",
    "gs": "gs",
    "monotone-lb": "mono-best",
    "xos-lb": "mono-best",
    "rrs-lb": "mono-best",
}
# xos-lb sizes are values of t, every other family takes item counts
BENCH_DEFAULT_SIZES = {"monotone-lb": "9", "xos-lb": "2", "rrs-lb": "5,10"}

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3


class PricingLab:
    """Command surface over the library; every command returns data and writes files on request"""

    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}

    def _emit(self, doc: Dict, out: Optional[str]) -> None:
        if out:
            with open(out, "w", encoding="utf-8") as f:
                f.write(instance_storage.canonical_dumps(doc))
            logger.info(f"Wrote {out}")
        else:
            sys.stdout.write(instance_storage.canonical_dumps(doc))

    def generate(
        self,
        family: str,
        m: Optional[int] = None,
        n: Optional[int] = None,
        t: Optional[int] = None,
        eps: Optional[float] = None,
        support: int = 2,
        kind: str = "coverage",
        seed: int = 0,
    ) -> Tuple[mechanisms.Instance, Optional[Tuple[RandomPricing, ...]]]:
        """Build an instance of a family with its stored reference pricings"""
        if family == "xos-lb":
            instance, ones = instances.gen_xos_lb(t or 2, eps, seed, self.config)
            return instance, tuple(RandomPricing.point(ones) for _ in instance.buyers)
        if m is None:
            raise ValueError(f"{family} needs --m")
        if family == "monotone-lb":
            return instances.gen_monotone_lb(m, n, eps, self.config)
        if family == "rrs-lb":
            family_obj, p, S = instances.gen_rrs_lb(m, 1e-6 if eps is None else eps, self.config)
            meta = {"family": "rrs-lb", "m": m, "eps": family_obj.eps, "available": sorted(S)}
            return mechanisms.Instance((family_obj,), meta), (RandomPricing.point(p),)
        if family == "subadditive":
            return instances.gen_random_subadditive(m, support, kind, seed, n, self.config), None
        if family == "gs":
            buyers = settings.get_setting(self.config, "random_buyers") if n is None else n
            return instances.gen_random_gs(m, buyers, support, seed), None
        raise ValueError(f"Unknown family: {family}, expected one of {', '.join(FAMILIES)}")

    def cmd_gen(self, family: str, out: Optional[str] = None, **params) -> Dict:
        instance, reference = self.generate(family, **params)
        doc = instance_storage.encode_instance(instance, reference)
        self._emit(doc, out)
        return doc

    def solve(
        self,
        instance: mechanisms.Instance,
        reference: Optional[Sequence[RandomPricing]] = None,
        grid: Optional[str] = None,
    ) -> exante.ExAnteSolution:
        text = grid if grid is not None else settings.get_setting(self.config, "default_grid")
        extra = settings.parse_float_list(text, [])
        sol = exante.solve_with_fallback(instance.buyers, extra, reference, self.config)
        report = exante.check_exante_solution(instance.buyers, sol)
        if not report.passed:
            logger.warning(formatter.format_report(report, show_passed=False))
        return sol

    def cmd_solve(self, instance_path: str, grid: Optional[str] = None, out: Optional[str] = None) -> exante.ExAnteSolution:
        instance, reference = instance_storage.load_instance(instance_path, self.config)
        sol = self.solve(instance, reference, grid)
        logger.info(f"EARev = {sol.value:.12g} for {instance_path}")
        self._emit(instance_storage.encode_exante(sol), out)
        return sol

    def cmd_run(
        self,
        instance_path: str,
        exante_path: str,
        mechanism: str,
        trials: int,
        seed: int = 0,
        out: Optional[str] = None,
        csv_path: Optional[str] = None,
    ) -> Dict:
        instance, _ = instance_storage.load_instance(instance_path, self.config)
        sol = instance_storage.load_exante(exante_path)
        built = mechanisms.build_mechanism(mechanism, instance, sol, self.config)
        result = mechanisms.monte_carlo(built, trials, seed, self.config)
        logger.info(formatter.format_run_summary(result, sol.value))
        if csv_path:
            instance_storage.save_revenue_csv(csv_path, result.revenues)
        doc = instance_storage.run_report(result, sol)
        self._emit(doc, out)
        return doc

    def cmd_verify(self, suite: str, seed: int = 0) -> List[VerificationReport]:
        return verify.run_suite(suite, seed, self.config)

    def cmd_bench(
        self,
        family: str,
        sizes: Optional[str] = None,
        trials: Optional[int] = None,
        seed: int = 0,
        out: Optional[str] = None,
        mechanism: Optional[str] = None,
    ) -> List[Dict]:
        """
        EARev against Monte Carlo mechanism revenue over instance sizes.

        Args:
            family: One of BENCH_FAMILIES
            sizes: Comma-separated sizes: t for xos-lb, item counts otherwise (defaults to
                BENCH_DEFAULT_SIZES, then bench_sizes)
            trials: Trials per size (defaults to bench_trials)
            seed: Master seed
            out: CSV path (stdout when omitted)
            mechanism: Mechanism name (defaults to the family's entry in BENCH_FAMILIES)

        Returns:
            Bench rows with the columns of formatter.BENCH_COLUMNS
        """
        if family not in BENCH_FAMILIES:
            raise ValueError(f"Unknown bench family: {family}, expected one of {', '.join(BENCH_FAMILIES)}")
        default_sizes = BENCH_DEFAULT_SIZES.get(family) or settings.get_setting(self.config, "bench_sizes")
        size_list = settings.parse_int_list(sizes or default_sizes, [2, 4, 6])
        mechanism = mechanism or BENCH_FAMILIES[family]
        trials = trials or settings.get_setting(self.config, "bench_trials")
        config = dict(self.config, validate_transcripts=True)
        rows = []
        iterator = size_list
        if settings.get_setting(self.config, "show_progress"):
            iterator = tqdm(size_list, desc=f"bench {family}", unit="size")
        for size in iterator:
            params = {"t": size} if family == "xos-lb" else {"m": size}
            instance, reference = self.generate(family, seed=seed, **params)
            size = instance.m
            sol = self.solve(instance, reference)
            built = mechanisms.build_mechanism(mechanism, instance, sol, config)
            try:
                result = mechanisms.monte_carlo(built, trials, seed, config)
                rows.append(formatter.bench_row(family, size, seed, sol.value, result, True))
            except mechanisms.TranscriptError as e:
                logger.error(f"Infeasible transcript at size {size}: {e}")
                nan = formatter.format_number(math.nan)
                rows.append(
                    {
                        "family": family,
                        "size": size,
                        "seed": seed,
                        "earev": formatter.format_number(sol.value),
                        "mean_revenue": nan,
                        "stderr": nan,
                        "ratio": nan,
                        "feasible": "false",
                    }
                )
        if out:
            with open(out, "w", encoding="utf-8", newline="") as f:
                self._write_bench(f, rows)
            logger.info(f"Wrote {len(rows)} bench rows to {out}")
        else:
            self._write_bench(sys.stdout, rows)
        return rows

    @staticmethod
    def _write_bench(stream, rows: List[Dict]) -> None:
        writer = csv.DictWriter(stream, fieldnames=formatter.BENCH_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqprice", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    parser.add_argument("--config", help="JSON file of configuration overrides")
    parser.add_argument("--json", action="store_true", help="report errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance file")
    gen.add_argument("family", choices=FAMILIES)
    gen.add_argument("--m", type=int, help="item count")
    gen.add_argument("--n", type=int, help="buyer count")
    gen.add_argument("--t", type=int, help="XOS bound parameter (even)")
    gen.add_argument("--eps", type=float)
    gen.add_argument("--support", type=int, default=2, help="valuations per buyer for random families")
    gen.add_argument("--kind", choices=instances.SUBADDITIVE_FAMILIES, default="coverage")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")

    solve = sub.add_parser("solve", help="solve the ex ante relaxation")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--grid", help="extra candidate prices, comma separated")
    solve.add_argument("--out")

    run = sub.add_parser("run", help="simulate a mechanism")
    run.add_argument("--instance", required=True)
    run.add_argument("--exante", required=True)
    run.add_argument("--mechanism", choices=tuple(mechanisms.MECHANISMS), required=True)
    run.add_argument("--trials", type=int, default=1000)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out")
    run.add_argument("--csv", help="per-trial revenue CSV (columns: trial,revenue)")

    check = sub.add_parser("verify", help="run verification suites")
    check.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    check.add_argument("--seed", type=int, default=0)

    bench = sub.add_parser(
        "bench",
        help="EARev against mechanism revenue",
        description="CSV columns: " + ",".join(formatter.BENCH_COLUMNS),
    )
    bench.add_argument("--family", choices=tuple(BENCH_FAMILIES), required=True)
    bench.add_argument("--sizes", help="comma-separated item counts (values of t for xos-lb)")
    bench.add_argument("--mechanism", choices=tuple(mechanisms.MECHANISMS), help="overrides the family default")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out")
    return parser


def _report_error(error: Exception, as_json: bool) -> None:
    logger.error(f"{type(error).__name__}: {error}")
    if as_json:
        sys.stderr.write(json.dumps({"error": type(error).__name__, "message": str(error)}) + "\n")
    else:
        sys.stderr.write(f"error: {error}\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        lab = PricingLab(settings.load_config(args.config))
        if args.command == "gen":
            lab.cmd_gen(
                args.family,
                args.out,
                m=args.m,
                n=args.n,
                t=args.t,
                eps=args.eps,
                support=args.support,
                kind=args.kind,
                seed=args.seed,
            )
        elif args.command == "solve":
            sol = lab.cmd_solve(args.instance, args.grid, args.out)
            if args.out:
                print(f"EARev: {sol.value:.12g}")
        elif args.command == "run":
            doc = lab.cmd_run(args.instance, args.exante, args.mechanism, args.trials, args.seed, args.out, args.csv)
            if args.out:
                print(f"mean revenue: {doc['mean_revenue']:.6g} ± {doc['stderr']:.2g}")
        elif args.command == "verify":
            reports = lab.cmd_verify(args.suite, args.seed)
            for report in reports:
                print(formatter.format_report(report, show_passed=True))
            return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED
        elif args.command == "bench":
            rows = lab.cmd_bench(args.family, args.sizes, args.trials, args.seed, args.out, args.mechanism)
            if args.out:
                print(formatter.format_bench_table(rows))
    except instance_storage.InstanceFormatError as e:
        _report_error(e, args.json)
        return EXIT_USAGE
    except PricingError as e:
        _report_error(e, args.json)
        return EXIT_DOMAIN
    except (ValueError, OSError) as e:
        _report_error(e, args.json)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
