"""Deciding whether a family handles a challenge set, and certifying it.

Three routes produce witnesses:

* :func:`structured_handle` replays the construction: greedy bucket order,
  then one generator per bucket. It is sound but only one-sided.
* :func:`brute_force_handle` is an exact backtracking search over the
  members and serves as the oracle.
* :func:`find_witness` tries the structured route on every stored copy (and
  on composition provenance) before falling back to brute force.

:func:`exhaustive_check` and :func:`monte_carlo_handle_prob` drive these over
all, or over random, challenge sets.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import binomtest

from .core import (
    BudgetExceeded,
    ErrorVector,
    GalvinFamily,
    GeneratorBank,
    ParameterError,
    PartitionWitness,
    SubsetMask,
    as_bits,
    bucket_errors,
    compress_mask,
    expand_mask,
    full_mask,
    imbalance,
    mask_of,
)

DEFAULT_NODE_BUDGET = 10**7
DEFAULT_MAX_EXHAUSTIVE_N = 20


# ---------------------------------------------------------------------------
# greedy ordering


def greedy_order(values: Sequence[int]) -> tuple[int, ...]:
    """Bucket order with ``0`` first and the last bucket last.

    Each next bucket has error of sign opposite to the running prefix; with
    a zero prefix, or when no such bucket is left, the smallest unused index
    is taken (falling back to a zero-error bucket first).
    """
    D = len(values) - 1
    remaining = list(range(1, D))
    order = [0]
    prefix = values[0]
    while remaining:
        pick = None
        if prefix:
            pick = next((b for b in remaining if values[b] * prefix < 0), None)
            if pick is None:
                pick = next((b for b in remaining if values[b] == 0), None)
        if pick is None:
            pick = remaining[0]
        remaining.remove(pick)
        order.append(pick)
        prefix += values[pick]
    if D > 0:
        order.append(D)
    return tuple(order)


def greedy_pi(errors: ErrorVector) -> tuple[int, ...]:
    """Order the buckets so that every prefix error stays within ``max |R_i|``.

    Requires the errors to sum to zero (a half-size ``A``). Doubled errors of
    an odd ground set may sum to one, in which case the bound holds up to
    that unit.
    """
    allowed = (0, 1) if errors.doubled else (0,)
    if errors.total not in allowed:
        raise ParameterError(f"bucket errors sum to {errors.total}; a half-size A is required")
    return greedy_order(errors.values)


def max_prefix_error(values: Sequence[int], pi: Sequence[int]) -> int:
    best = running = 0
    for b in pi:
        running += values[b]
        best = max(best, abs(running))
    return best


# ---------------------------------------------------------------------------
# witnesses


def _odd_last(sets: list[int]) -> list[int]:
    odd = [s for s in sets if s.bit_count() % 2]
    return [s for s in sets if s.bit_count() % 2 == 0] + odd


def _structured(a: int, bank: GeneratorBank, pi: Sequence[int]) -> list[int] | None:
    buckets, banks = bank.buckets, bank.banks
    prev_comp = buckets[0] ^ banks[0][0]
    parts = []
    for j in range(1, len(pi)):
        b = pi[j]
        for t in banks[b]:
            s = prev_comp | t
            size = s.bit_count()
            if 2 * (a & s).bit_count() - size == size & 1:
                break
        else:
            return None
        parts.append(s)
        prev_comp = buckets[b] ^ t
    return parts


def structured_handle(
    a: SubsetMask | int, bank: GeneratorBank, pi: Sequence[int] | None = None
) -> PartitionWitness | None:
    """Sequentially pick one generator per bucket in order ``pi``.

    Step ``j`` needs ``(χ_{π(j-1)} ∖ T_{π(j-1)}) ∪ T_{π(j)}`` balanced on
    ``A`` (or off by ``+1`` when its size is odd). Given that the earlier
    steps succeeded, the generators that work at step ``j`` all contain
    the same number of elements of ``A``, so the first match is as good as
    any and the search is exact for the given order. ``pi`` defaults to the
    greedy order.
    """
    bits = as_bits(a, bank.n)
    if pi is None:
        doubled = any(b.bit_count() % 2 for b in bank.buckets)
        pi = greedy_order(bucket_errors(bits, bank.buckets, doubled))
    parts = _structured(bits, bank, pi)
    if parts is None:
        return None
    return PartitionWitness.of(bank.n, bits, _odd_last(parts))


class _Search:
    def __init__(self, budget: int):
        self.budget = budget
        self.nodes = 0


def _brute(a: int, members: Sequence[int], n: int, parts: int, budget: int) -> list[int] | None:
    full = full_mask(n)
    by_low: list[list[int]] = [[] for _ in range(n)]
    for s in members:
        if not s:
            continue
        imb = 2 * (a & s).bit_count() - s.bit_count()
        if imb == 0 or imb == 1:
            by_low[(s & -s).bit_length() - 1].append(s)
    state = _Search(budget)
    chosen: list[int] = []

    def go(covered: int, odd_used: bool) -> bool:
        if covered == full:
            return len(chosen) == parts
        if len(chosen) >= parts:
            return False
        state.nodes += 1
        if state.nodes > state.budget:
            raise BudgetExceeded(f"brute-force search exceeded {state.budget} nodes")
        low = (~covered & (covered + 1)).bit_length() - 1
        for s in by_low[low]:
            if s & covered:
                continue
            odd = s.bit_count() % 2 == 1
            if odd and odd_used:
                continue
            chosen.append(s)
            if go(covered | s, odd_used or odd):
                return True
            chosen.pop()
        return False

    return list(chosen) if go(0, False) else None


def brute_force_handle(
    a: SubsetMask | int, fam: GalvinFamily, budget: int = DEFAULT_NODE_BUDGET
) -> PartitionWitness | None:
    """Exact search for ``fam.d`` members partitioning the ground set, balanced on ``a``.

    Backtracks over the lowest uncovered element, which any extending member
    must contain as its own lowest element. At most one member may be off by
    ``+1`` and only if its size is odd. Raises :class:`BudgetExceeded` after
    ``budget`` search nodes.
    """
    bits = as_bits(a, fam.n)
    parts = _brute(bits, fam.all_masks(), fam.n, fam.d, budget)
    if parts is None:
        return None
    return PartitionWitness.of(fam.n, bits, _odd_last(parts))


def _via_composition(a: int, fam: GalvinFamily, budget: int) -> list[int] | None:
    comp = fam.composition
    outer = _find(a, comp.outer, budget)
    if outer is None:
        return None
    parts = []
    for s in outer:
        support = [e for e in range(fam.n) if s >> e & 1]
        inner = comp.inner[s]
        local = _find(compress_mask(a, support), inner, budget)
        if local is None:
            return None
        parts.extend(expand_mask(t, support) for t in local)
    return parts


def _find(a: int, fam: GalvinFamily, budget: int) -> list[int] | None:
    if fam.d == 1:
        full = full_mask(fam.n)
        return [full] if full in fam and imbalance(a, full) in (0, 1) else None
    for copy in fam.sources:
        bank = copy.mapped
        doubled = any(b.bit_count() % 2 for b in bank.buckets)
        parts = _structured(a, bank, greedy_order(bucket_errors(a, bank.buckets, doubled)))
        if parts is not None:
            return parts
    if fam.composition is not None:
        parts = _via_composition(a, fam, budget)
        if parts is not None:
            return parts
    return _brute(a, fam.all_masks(), fam.n, fam.d, budget)


def find_witness(
    a: SubsetMask | int, fam: GalvinFamily, budget: int = DEFAULT_NODE_BUDGET
) -> PartitionWitness | None:
    """Structured search on every stored copy, then composition, then brute force."""
    bits = as_bits(a, fam.n)
    parts = _find(bits, fam, budget)
    if parts is None:
        return None
    return PartitionWitness.of(fam.n, bits, _odd_last(parts))


def _allowed_sizes(fam: GalvinFamily) -> tuple[int, int] | None:
    """Inclusive size range for every part, or ``None`` when unconstrained."""
    if fam.variant == "indivisible":
        k = fam.n / (2 * fam.d)
        return 2 * math.floor(k), 2 * math.ceil(k)
    if fam.variant == "mixed-outer":
        if fam.plan is None:
            return None
        return fam.plan.small, fam.plan.large
    return fam.n // fam.d, fam.n // fam.d


def check_witness(a: SubsetMask | int, fam: GalvinFamily, w: PartitionWitness) -> bool:
    """Whether ``w`` certifies that ``fam`` handles ``a``.

    Checks membership, disjointness, coverage, the number and sizes of the
    parts, and balance. In the indivisible variant every part but the last
    has size ``2⌊k⌋`` or ``2⌈k⌉``, the last lies between them, and the last
    may hold one more element of ``A`` than of its complement.
    """
    bits = as_bits(a, fam.n)
    if w.n != fam.n or bits.bit_count() != fam.challenge_size:
        return False
    if len(w.sets) != fam.d or any(s not in fam for s in w.sets):
        return False
    covered = 0
    for s in w.sets:
        if s & covered:
            return False
        covered |= s
    if covered != full_mask(fam.n):
        return False
    if tuple(imbalance(bits, s) for s in w.sets) != w.balances:
        return False
    sizes = _allowed_sizes(fam)
    if sizes is not None:
        lo, hi = sizes
        if not all(lo <= s.bit_count() <= hi for s in w.sets):
            return False
        if fam.variant == "indivisible" and any(s.bit_count() not in (lo, hi) for s in w.sets[:-1]):
            return False
    if any(b != 0 for b in w.balances[:-1]):
        return False
    last_ok = (0, 1) if fam.variant == "indivisible" or fam.n % 2 else (0,)
    return w.balances[-1] in last_ok


@dataclass(frozen=True)
class DegreeReport:
    ok: bool
    min_degree: int
    degrees: tuple[int, ...]
    histogram: dict[int, int] = field(default_factory=dict)


def check_degree_condition(fam: GalvinFamily) -> DegreeReport:
    """Every element must lie in at least ``d/2`` members.

    Implicit complements count as members, so for a classic Galvin family
    every element has degree ``|F|``.
    """
    degrees = [0] * fam.n
    for s in fam.all_masks():
        for e in range(fam.n):
            degrees[e] += s >> e & 1
    hist: dict[int, int] = {}
    for g in degrees:
        hist[g] = hist.get(g, 0) + 1
    min_deg = min(degrees)
    return DegreeReport(2 * min_deg >= fam.d, min_deg, tuple(degrees), dict(sorted(hist.items())))


# ---------------------------------------------------------------------------
# drivers


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of a verification run.

    ``success`` means every examined set was handled (exhaustive mode) or
    is simply ``successes == trials`` (Monte Carlo mode). ``unresolved``
    counts sets for which brute force ran out of budget; they are not
    counted as successes.
    """

    mode: str
    success: bool
    trials: int
    successes: int
    unresolved: int = 0
    witness: PartitionWitness | None = None
    counterexample: SubsetMask | None = None
    ci: tuple[float, float] | None = None

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


def half_sets(n: int, size: int) -> Iterator[int]:
    """All ``size``-subsets of ``[0, n)`` as masks, in increasing order (Gosper)."""
    if size == 0:
        yield 0
        return
    x = (1 << size) - 1
    limit = 1 << n
    while x < limit:
        yield x
        low = x & -x
        ripple = x + low
        x = ripple | (((x ^ ripple) >> 2) // low)


def random_half_set(n: int, rng: np.random.Generator, size: int | None = None) -> int:
    size = (n + 1) // 2 if size is None else size
    return mask_of(int(e) for e in rng.choice(n, size, replace=False))


def _chunks(items: list[int], parts: int) -> list[list[int]]:
    step = max(1, math.ceil(len(items) / parts))
    return [items[i:i + step] for i in range(0, len(items), step)]


def _scan(fam: GalvinFamily, batch: list[int], budget: int, stop_on_failure: bool):
    """Returns (handled, unresolved, first failure or None, first witness or None)."""
    handled = unresolved = 0
    failure = first = None
    for a in batch:
        try:
            parts = _find(a, fam, budget)
        except BudgetExceeded:
            unresolved += 1
            continue
        if parts is None:
            failure = a
            if stop_on_failure:
                break
            continue
        handled += 1
        if first is None:
            first = PartitionWitness.of(fam.n, a, _odd_last(parts))
    return handled, unresolved, failure, first


def exhaustive_check(
    fam: GalvinFamily,
    budget: int = DEFAULT_NODE_BUDGET,
    max_n: int = DEFAULT_MAX_EXHAUSTIVE_N,
    threads: int = 1,
) -> VerifyReport:
    """Check every challenge set; report the first counterexample in mask order.

    Raises :class:`BudgetExceeded` if ``n > max_n`` or if any single search
    exceeds ``budget`` nodes.
    """
    if fam.n > max_n:
        raise BudgetExceeded(
            f"exhaustive check over C({fam.n}, {fam.challenge_size}) sets exceeds n <= {max_n}"
        )
    sets = list(half_sets(fam.n, fam.challenge_size))
    batches = _chunks(sets, max(1, threads) * 4) if threads > 1 else [sets]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _scan(fam, b, budget, True), batches))
    else:
        results = [_scan(fam, b, budget, True) for b in batches]
    handled = unresolved = 0
    witness = None
    for h, u, failure, first in results:
        handled += h
        unresolved += u
        witness = witness or first
        if failure is not None:
            return VerifyReport(
                "exhaustive", False, len(sets), handled, unresolved,
                counterexample=SubsetMask(fam.n, failure),
            )
    if unresolved:
        raise BudgetExceeded(f"{unresolved} challenge sets exceeded the search budget")
    return VerifyReport("exhaustive", True, len(sets), handled, witness=witness)


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def monte_carlo_handle_prob(
    fam: GalvinFamily,
    trials: int,
    rng: np.random.Generator,
    budget: int = DEFAULT_NODE_BUDGET,
    threads: int = 1,
) -> VerifyReport:
    """Estimate the probability that a uniform challenge set is handled, with a 95% Wilson interval.

    Challenge sets are all drawn from ``rng`` up front, so the estimate does
    not depend on ``threads``.
    """
    if trials < 1:
        raise ParameterError("need at least one trial")
    sets = [random_half_set(fam.n, rng, fam.challenge_size) for _ in range(trials)]
    batches = _chunks(sets, threads * 4) if threads > 1 else [sets]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _scan(fam, b, budget, False), batches))
    else:
        results = [_scan(fam, b, budget, False) for b in batches]
    handled = sum(r[0] for r in results)
    unresolved = sum(r[1] for r in results)
    failure = next((r[2] for r in results if r[2] is not None), None)
    witness = next((r[3] for r in results if r[3] is not None), None)
    return VerifyReport(
        "monte-carlo",
        handled == trials,
        trials,
        handled,
        unresolved,
        witness=witness,
        counterexample=None if failure is None else SubsetMask(fam.n, failure),
        ci=wilson_interval(handled, trials),
    )


def build_until_galvin(cfg, retries: int = 16, threads: int = 1, budget: int = DEFAULT_NODE_BUDGET):
    """Rebuild with derived seeds until the family passes :func:`exhaustive_check`.

    Returns ``(family, report, attempts)``; ``report.success`` is false if
    all ``retries`` attempts failed.
    """
    from .construct import build_galvin, retry_seed

    report = fam = None
    for attempt in range(retries):
        fam = build_galvin(replace(cfg, seed=retry_seed(cfg.seed, attempt)), threads=threads)
        report = exhaustive_check(fam, budget=budget, threads=threads)
        if report.success:
            return fam, report, attempt + 1
    return fam, report, retries
