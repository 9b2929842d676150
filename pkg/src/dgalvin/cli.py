"""Command-line interface: ``dgalvin construct | verify | estimate | bounds | selftest``.

Reports go to stdout as ``key=value`` lines preceded by a short human
readable summary; diagnostics go to stderr. Elements in human-readable lines
are 1-based. Exit codes: 0 success, 1 property failure, 2 parameter error,
3 resource budget exceeded, 4 I/O or format error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from typing import Sequence, TextIO

import numpy as np

from . import numerics
from .construct import (
    BUILD_VARIANTS,
    BuildConfig,
    build_galvin,
    interval_galvin,
    resolve_generator_count,
    retry_seed,
)
from .core import BudgetExceeded, CalibrationError, GalvinFamily, ParameterError, elements_of
from .familyfile import ENCODINGS, FormatError, read_family, serialize
from .verify import (
    DEFAULT_MAX_EXHAUSTIVE_N,
    DEFAULT_NODE_BUDGET,
    VerifyReport,
    check_degree_condition,
    exhaustive_check,
    monte_carlo_handle_prob,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARAMETER = 2
EXIT_BUDGET = 3
EXIT_IO = 4

DEFAULT_RETRIES = 16
SEED_ENV = "DGALVIN_SEED"

log = logging.getLogger("dgalvin")


def _human(mask: int) -> str:
    return "{" + ", ".join(str(e + 1) for e in elements_of(mask)) + "}"


def _emit(out: TextIO, **fields) -> None:
    for key, value in fields.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        out.write(f"{key}={value}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def _r_value(text: str) -> int | str:
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"r must be an integer or 'auto', got {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def _bounds_fields(n: int, d: int) -> dict:
    fields: dict = {}
    if n % (2 * d) == 0:
        cb = numerics.counting_lower_bound(n, d)
        fields["counting_bound_ratio"] = cb.ratio
        fields["counting_bound"] = f"{cb.value:.6g}"
        fields["counting_bound_ceil"] = cb.ceiling
    fields["degree_bound"] = numerics.degree_lower_bound(d)
    return fields


def cmd_construct(args: argparse.Namespace, out: TextIO) -> int:
    if args.variant == "interval":
        if args.d != 2:
            raise ParameterError("the interval family is a 2-Galvin family; use -d 2")
        fam = interval_galvin(args.n)
        r, attempts, verified = None, 1, None
        if args.verify:
            report = exhaustive_check(fam, budget=args.budget, threads=args.threads)
            verified = report.success
    else:
        cfg = BuildConfig(
            n=args.n, d=args.d, variant=args.variant, r=args.r,
            copies=args.copies, seed=args.seed,
            calibration_trials=args.calibration_trials,
            outer_parts=args.outer_parts,
        )
        verified = None
        attempts = 0
        for attempt in range(args.retries if args.verify else 1):
            attempts = attempt + 1
            trial = replace(cfg, seed=retry_seed(cfg.seed, attempt))
            r = resolve_generator_count(trial)
            fam = build_galvin(replace(trial, r=r), threads=args.threads)
            if not args.verify:
                break
            report = exhaustive_check(fam, budget=args.budget, threads=args.threads)
            verified = report.success
            log.info("attempt %d (seed %d): %s", attempts, trial.seed, "ok" if verified else "counterexample")
            if verified:
                break

    text = serialize(fam, args.encoding)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(text.encode("ascii"))
        summary = out
    else:
        out.write(text)
        summary = sys.stderr

    summary.write(f"constructed {fam.variant} family: {len(fam)} sets over n={fam.n}, d={fam.d}\n")
    fields = dict(
        n=fam.n, d=fam.d, variant=fam.variant, seed=fam.seed, copies=fam.copies,
        r=r if r is not None else "-", size=len(fam), raw_count=fam.raw_count,
        attempts=attempts, verified="skipped" if verified is None else verified,
    )
    fields.update(_bounds_fields(fam.n, fam.d))
    _emit(summary, **fields)
    if verified is False:
        summary.write(f"no family passed the exhaustive check in {attempts} attempts\n")
        return EXIT_FAILURE
    return EXIT_OK


def _report_fields(report: VerifyReport) -> dict:
    fields = dict(mode=report.mode, trials=report.trials, handled=report.successes, unresolved=report.unresolved)
    if report.ci is not None:
        fields.update(p_hat=f"{report.p_hat:.6f}", ci_low=f"{report.ci[0]:.6f}", ci_high=f"{report.ci[1]:.6f}")
    if report.counterexample is not None:
        fields["counterexample_mask"] = format(report.counterexample.bits, "x")
    if report.witness is not None:
        fields["witness_masks"] = ",".join(format(s, "x") for s in report.witness.sets)
    return fields


def _print_report(fam: GalvinFamily, report: VerifyReport, out: TextIO) -> None:
    if report.counterexample is not None:
        out.write(f"counterexample A = {_human(report.counterexample.bits)}\n")
    if report.witness is not None:
        parts = " | ".join(_human(s) for s in report.witness.sets)
        out.write(f"example witness: {parts}\n")
    deg = check_degree_condition(fam)
    out.write(f"degree condition (every element in >= d/2 sets): {'ok' if deg.ok else 'violated'}, "
              f"min degree {deg.min_degree}\n")
    _emit(out, **_report_fields(report), degree_ok=deg.ok, min_degree=deg.min_degree)


def cmd_verify(args: argparse.Namespace, out: TextIO) -> int:
    fam = read_family(args.family)
    start = time.perf_counter()
    if args.mode == "exhaustive":
        report = exhaustive_check(fam, budget=args.budget, max_n=args.max_n, threads=args.threads)
        out.write(f"GALVIN: {'yes' if report.success else 'no'}\n")
    else:
        rng = np.random.default_rng(args.seed)
        report = monte_carlo_handle_prob(fam, args.trials, rng, budget=args.budget, threads=args.threads)
        out.write(f"HANDLED: {report.successes}/{report.trials} sampled sets\n")
    _print_report(fam, report, out)
    _emit(out, elapsed_s=f"{time.perf_counter() - start:.3f}")
    return EXIT_OK if report.success else EXIT_FAILURE


def cmd_estimate(args: argparse.Namespace, out: TextIO) -> int:
    fam = read_family(args.family)
    start = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    report = monte_carlo_handle_prob(fam, args.trials, rng, budget=args.budget, threads=args.threads)
    lo, hi = report.ci
    out.write(f"P(handled) ~ {report.p_hat:.4f}  (95% Wilson interval [{lo:.4f}, {hi:.4f}])\n")
    _emit(out, **_report_fields(report))
    _emit(out, elapsed_s=f"{time.perf_counter() - start:.3f}")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace, out: TextIO) -> int:
    n, d = args.n, args.d
    if d < 2 or n % (2 * d):
        raise ParameterError(f"bounds need d >= 2 and 2d | n (n={n}, d={d})")
    k = n // (2 * d)
    cb = numerics.counting_lower_bound(n, d)
    deg = numerics.degree_lower_bound(d)
    threshold = numerics.concentration_threshold(k, d)
    if args.r is not None:
        r, r_source = args.r, "given"
    else:
        # typical per-step probability of an unbiased bucket
        y = float(numerics.balance_prob_exact(0, 0, k)) if k % 2 == 0 else numerics.balance_prob_asymptotic(0, 0, k)
        r = max(1, int(np.ceil(np.log(4 * d) / y)))
        r_source = "nominal"
    single = (d - 1) * (d - 2) * r * r + 2 * (d - 1) * r + 1
    out.write(f"bounds for n={n}, d={d} (k={k})\n")
    ratio = str(cb.ratio)
    if len(ratio) > 40:
        ratio = f"C({n},{n // 2})/C({2 * k},{k})^{d}"
    out.write(f"  counting lower bound   |F| >= ({ratio})^(1/{d - 1}) = {cb.value:.6g}\n")
    out.write(f"  degree lower bound     |F| >= d^2/2 = {deg}\n")
    out.write(f"  concentration level    sqrt(k ln({numerics.UNION_BOUND_CONSTANT} d)) = {threshold:.6g}\n")
    out.write(f"  construction size      <= {single} per family, <= {single * n} with n copies (r={r}, {r_source})\n")
    _emit(
        out, n=n, d=d, k=k,
        counting_bound_ratio=cb.ratio, counting_bound=f"{cb.value:.6g}", counting_bound_ceil=cb.ceiling,
        degree_bound=deg, hoeffding_threshold=f"{threshold:.6g}",
        r=r, r_source=r_source, single_family_raw_max=single, union_raw_max=single * n,
    )
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace, out: TextIO) -> int:
    from .acceptance import run_all

    results = run_all(out=out)
    failed = [c for c in results if not c.passed]
    out.write(f"{len(results) - len(failed)}/{len(results)} criteria passed\n")
    return EXIT_FAILURE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgalvin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--budget", type=int, default=DEFAULT_NODE_BUDGET,
                       help="brute-force search node budget per challenge set")

    p = sub.add_parser("construct", help="build a d-Galvin family")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-d", type=int, required=True)
    p.add_argument("--variant", choices=(*BUILD_VARIANTS, "interval"), default="standard")
    p.add_argument("-r", type=_r_value, default="auto", help="generators per bucket, or 'auto'")
    p.add_argument("--copies", type=int, default=None, help="permuted copies (default n)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--outer-parts", type=int, default=None,
                   help="intermediate parts for the mixed-large-d variant")
    p.add_argument("--calibration-trials", type=int, default=2000)
    p.add_argument("-o", "--out", default=None, help="output path (default stdout)")
    p.add_argument("--encoding", choices=ENCODINGS, default="text")
    p.add_argument("--verify", action="store_true", help="exhaustively verify, rebuilding on failure")
    p.add_argument("--retries", type=int, default=DEFAULT_RETRIES)
    common(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="check the d-Galvin property of a family file")
    p.add_argument("family")
    p.add_argument("--mode", choices=("exhaustive", "sample"), default="exhaustive")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-n", type=int, default=DEFAULT_MAX_EXHAUSTIVE_N)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("estimate", help="Monte Carlo estimate of the handling probability")
    p.add_argument("family")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="print lower bounds and construction size estimates")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-d", type=int, required=True)
    p.add_argument("-r", type=int, default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARAMETER if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    try:
        return args.func(args, out)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ParameterError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
