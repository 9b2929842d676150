"""Release criteria, shared by ``dgalvin selftest`` and ``tests/test_acceptance.py``.

Every criterion runs at pinned seeds and tolerances and returns a
:class:`Criterion`; :func:`run_all` prints one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import io
import math
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from . import numerics
from .construct import (
    BuildConfig,
    build_single_family,
    compose_families,
    copy_stream,
    interval_galvin,
    mixed_size_plan,
    resolve_generator_count,
    bucket_layout_standard,
)
from .core import GalvinFamily, bucket_errors
from .verify import (
    brute_force_handle,
    build_until_galvin,
    check_degree_condition,
    check_witness,
    exhaustive_check,
    find_witness,
    greedy_order,
    max_prefix_error,
    monte_carlo_handle_prob,
    random_half_set,
    structured_handle,
)

SEED = 20240


@dataclass
class Criterion:
    number: int
    label: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.number:2d}] {self.label}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, label: str, body: Callable[[], tuple[bool, str]], limit: float | None = None) -> Criterion:
    start = time.perf_counter()
    passed, detail = body()
    seconds = time.perf_counter() - start
    if limit is not None and seconds >= limit:
        passed = False
        detail += f"; took {seconds:.1f}s, limit {limit:.0f}s"
    return Criterion(number, label, passed, detail, seconds)


# ---------------------------------------------------------------------------
# cached verified families (reused by the lower-bound criterion)


@lru_cache(maxsize=None)
def interval_families() -> tuple[tuple[GalvinFamily, bool], ...]:
    return tuple((fam, exhaustive_check(fam).success) for fam in map(interval_galvin, (8, 12, 16, 20)))


@lru_cache(maxsize=None)
def union_family() -> tuple[GalvinFamily, bool, int]:
    fam, report, attempts = build_until_galvin(BuildConfig(12, 3, copies=12, seed=SEED), retries=16)
    return fam, report.success, attempts


def _verified_inner(size: int, _cache: dict[int, GalvinFamily] = {}) -> GalvinFamily:
    if size not in _cache:
        fam, report, _ = build_until_galvin(BuildConfig(size, 2, seed=SEED + size), retries=16)
        if not report.success:
            raise RuntimeError(f"no verified 2-Galvin family over {size} elements")
        _cache[size] = fam
    return _cache[size]


@lru_cache(maxsize=None)
def composed_family() -> tuple[GalvinFamily, bool]:
    outer, report, _ = build_until_galvin(BuildConfig(16, 2, seed=SEED), retries=16)
    if not report.success:
        return outer, False
    fam = compose_families(outer, _verified_inner)
    return fam, exhaustive_check(fam).success


# ---------------------------------------------------------------------------
# criteria


def interval_baseline() -> Criterion:
    def body():
        results = interval_families()
        sizes = [f"n={f.n}:{'ok' if ok else 'FAIL'}" for f, ok in results]
        four_at_8 = len(results[0][0]) == 4
        return all(ok for _, ok in results) and four_at_8, ", ".join(sizes) + f"; |F(8)|={len(results[0][0])}"
    return _timed(1, "classic interval family is Galvin", body, limit=10)


def single_family_probability() -> Criterion:
    def body():
        cfg = BuildConfig(24, 3, seed=SEED)
        r = resolve_generator_count(cfg)
        fam = build_single_family(cfg, copy_stream(cfg.seed, 0))
        report = monte_carlo_handle_prob(fam, 1000, np.random.default_rng(SEED))
        return report.p_hat >= 0.45, f"r={r}, |F|={len(fam)}, p_hat={report.p_hat:.3f} >= 0.45"
    return _timed(2, "single family handles a random set w.p. >= 1/2", body, limit=60)


def permuted_union() -> Criterion:
    def body():
        fam, ok, attempts = union_family()
        return ok, f"(12,3) with 12 copies: |G|={len(fam)}, passed={ok} after {attempts} build(s) (cap 16)"
    return _timed(3, "permuted union is d-Galvin at desk scale", body, limit=60)


def greedy_ordering() -> Criterion:
    def body():
        rng = np.random.default_rng(SEED)
        violations = total = 0
        for n, d in ((24, 3), (40, 5), (80, 10)):
            layout = bucket_layout_standard(n, d)
            for _ in range(10_000):
                a = random_half_set(n, rng)
                values = bucket_errors(a, layout.masks, False)
                pi = greedy_order(values)
                total += 1
                violations += max_prefix_error(values, pi) > max(abs(v) for v in values)
        return violations == 0, f"{violations} violations in {total} orderings"
    return _timed(4, "greedy order keeps prefix errors within max |R_i|", body)


def bucket_concentration() -> Criterion:
    def body():
        n, d = 80, 10
        k = n // (2 * d)
        layout = bucket_layout_standard(n, d)
        threshold = numerics.concentration_threshold(k, d)
        rng = np.random.default_rng(SEED)
        exceed = sum(
            max(abs(v) for v in bucket_errors(random_half_set(n, rng), layout.masks, False)) > threshold
            for _ in range(10_000)
        )
        frac = exceed / 10_000
        return frac <= 0.25, f"fraction above sqrt(k ln 16d)={threshold:.3f}: {frac:.4f} <= 0.25"
    return _timed(5, "bucket errors concentrate", body)


def balance_probability() -> Criterion:
    def body():
        notes, ok = [], True
        for k in (50, 100, 200):
            ratio = float(numerics.balance_prob_exact(0, 0, k)) / numerics.balance_prob_asymptotic(0, 0, k)
            ok &= abs(ratio - 1) <= 0.10
            notes.append(f"k={k}: ratio {ratio:.4f}")
        for N in range(0, 65):
            for K in range(N + 1):
                for draw in range(N + 1):
                    p = numerics.HypergeomParams(K, N, draw)
                    if sum((numerics.hypergeom_pmf(p, x) for x in range(draw + 1)), Fraction(0)) != 1:
                        return False, f"pmf of H({K},{N},{draw}) does not sum to 1"
        notes.append("all pmfs with N <= 64 sum to 1")
        worst = 0.0
        for k in range(1, 33):
            for d in range(1, 9):
                p = numerics.HypergeomParams(d * k, 2 * d * k, 2 * k)
                deviations = [(abs(v - p.mean), numerics.hypergeom_pmf(p, v)) for v in p.support]
                for x in range(0, 2 * k + 1):
                    tail = sum((q for dev, q in deviations if dev > x), Fraction(0))
                    bound = numerics.hoeffding_tail_bound(x, k)
                    if tail > Fraction(bound):
                        return False, f"tail exceeds Hoeffding at k={k}, N={2 * d * k}, x={x}"
                    worst = max(worst, float(tail) / bound)
        notes.append(f"Hoeffding dominates every tail for k <= 32 (max tail/bound {worst:.3f})")
        return ok, "; ".join(notes)
    return _timed(6, "hypergeometric balance probability and tails", body)


def binomial_estimate() -> Criterion:
    def body():
        worst = 0.0
        for n in (100, 400, 1600):
            reach = math.floor(n ** 0.55)
            for m in range(-reach, reach + 1):
                worst = max(worst, abs(numerics.binom_approx_error(n, m)))
        return worst <= 0.01, f"max relative error {worst:.5f} <= 0.01"
    return _timed(7, "central binomial estimate", body)


def composition() -> Criterion:
    def body():
        fam, ok = composed_family()
        return ok, f"2-Galvin inside 2-Galvin over 16 elements: |F|={len(fam)}, d={fam.d}, exhaustive={ok}"
    return _timed(8, "composition yields a 4-Galvin family", body, limit=300)


def lower_bounds() -> Criterion:
    def body():
        ok = numerics.counting_lower_bound(8, 2).ratio == Fraction(70, 36)
        ok &= all(numerics.degree_lower_bound(d) == Fraction(d * d, 2) for d in range(1, 65))
        families = [f for f, good in interval_families() if good]
        fam, good, _ = union_family()
        families += [fam] if good else []
        comp, good = composed_family()
        families += [comp] if good else []
        notes = []
        for f in families:
            cb = numerics.counting_lower_bound(f.n, f.d)
            deg = check_degree_condition(f)
            fine = len(f) >= cb.value and len(f) >= numerics.degree_lower_bound(f.d) and deg.ok
            ok &= fine
            notes.append(f"(n={f.n},d={f.d}) |F|={len(f)} min degree {deg.min_degree}{'' if fine else ' FAIL'}")
        ok &= len(families) == 6
        return ok, "counting(8,2)=70/36; " + "; ".join(notes)
    return _timed(9, "lower bounds hold on verified families", body)


def indivisible_witnesses() -> Criterion:
    def body():
        n, d = 29, 6
        plan = mixed_size_plan(n, d, "indivisible")
        cfg = BuildConfig(n, d, variant="indivisible", copies=8, seed=SEED)
        from .construct import build_galvin

        fam = build_galvin(cfg)
        rng = np.random.default_rng(SEED)
        expected = [4, 4, 4, 5, 6, 6]
        good = 0
        for _ in range(100):
            a = random_half_set(n, rng)
            w = find_witness(a, fam)
            if w is not None and check_witness(a, fam, w) and sorted(s.bit_count() for s in w.sets) == expected:
                good += 1
        ok = good == 100 and plan.part_sizes() == expected
        return ok, f"plan f={plan.f}, c={plan.c}, m={plan.m}; {good}/100 witnesses with sizes {expected}"
    return _timed(10, "indivisible variant witnesses", body)


def oracle_agreement() -> Criterion:
    def body():
        rng = np.random.default_rng(SEED)
        params = [(4, 2), (8, 2), (8, 4), (12, 2), (12, 3), (12, 6), (16, 2), (16, 4), (16, 8)]
        structured = bad = unsound = 0
        for trial in range(500):
            n, d = params[rng.integers(len(params))]
            cfg = BuildConfig(n, d, r=int(rng.integers(1, 4)), copies=1, seed=int(rng.integers(2**32)))
            fam = build_single_family(cfg, copy_stream(cfg.seed, 0))
            a = random_half_set(n, rng)
            ws = structured_handle(a, fam.sources[0].bank)
            wb = brute_force_handle(a, fam)
            if ws is not None:
                structured += 1
                bad += wb is None
            for w in (ws, wb):
                if w is not None and not check_witness(a, fam, w):
                    unsound += 1
        ok = bad == 0 and unsound == 0
        return ok, f"{structured} structured successes, {bad} missed by brute force, {unsound} invalid witnesses"
    return _timed(11, "structured search agrees with the exact oracle", body)


def determinism() -> Criterion:
    def body():
        from .cli import main

        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for threads in (1, 8):
                path = Path(tmp) / f"fam-{threads}.txt"
                code = main(
                    ["construct", "-n", "12", "-d", "3", "--copies", "12", "--seed", "7",
                     "--threads", str(threads), "-o", str(path)],
                    out=io.StringIO(),
                )
                if code != 0:
                    return False, f"construct exited with {code}"
                paths.append(path.read_bytes())
        same = paths[0] == paths[1]
        return same, f"threads 1 vs 8: {'byte-identical' if same else 'DIFFERENT'} ({len(paths[0])} bytes)"
    return _timed(12, "construct output is reproducible", body)


CRITERIA: tuple[Callable[[], Criterion], ...] = (
    interval_baseline,
    single_family_probability,
    permuted_union,
    greedy_ordering,
    bucket_concentration,
    balance_probability,
    binomial_estimate,
    composition,
    lower_bounds,
    indivisible_witnesses,
    oracle_agreement,
    determinism,
)


def run_all(out: TextIO | None = None) -> list[Criterion]:
    results = []
    for criterion in CRITERIA:
        result = criterion()
        results.append(result)
        if out is not None:
            out.write(result.line() + "\n")
            out.flush()
    return results
