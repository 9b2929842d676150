"""Randomized construction of d-Galvin families.

A single family ``F`` is assembled from one generator bank: the ground set is
cut into buckets ``χ_0 .. χ_D``, each interior bucket receives ``r`` random
subsets, and every member is the complement of a generator inside one bucket
joined with a generator of another bucket. The full construction takes the
union of independently permuted copies of such families, and large ``d`` is
reached by composing an outer family with inner families built inside each
of its members.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import (
    BucketLayout,
    BuiltCopy,
    CalibrationError,
    Composition,
    GalvinFamily,
    GeneratorBank,
    MixedSizePlan,
    ParameterError,
    bucket_errors,
    expand_mask,
    full_mask,
    interval_mask,
    mask_of,
    permute_mask,
)
from .numerics import HypergeomParams, hypergeom_sample

log = logging.getLogger(__name__)

BUILD_VARIANTS = ("standard", "mixed-large-d", "indivisible")

# stream tags keep the per-purpose random streams of one master seed apart
_COPY_STREAM = 1
_CALIBRATION_STREAM = 2
_RETRY_STREAM = 3
_INNER_STREAM = 4


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 64-bit child seed of ``seed`` along ``path``."""
    state = np.random.SeedSequence([seed & (2**64 - 1), *path]).generate_state(1, np.uint64)
    return int(state[0])


def copy_stream(seed: int, index: int) -> np.random.Generator:
    """Private random stream of permuted copy ``index``."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), _COPY_STREAM, index]))


def retry_seed(seed: int, attempt: int) -> int:
    """Seed used by the ``attempt``-th rebuild; attempt 0 is the seed itself."""
    return seed if attempt == 0 else derive_seed(seed, _RETRY_STREAM, attempt)


@dataclass(frozen=True)
class BuildConfig:
    n: int
    d: int
    variant: str = "standard"
    r: int | str = "auto"
    copies: int | None = None
    seed: int = 0
    calibration_trials: int = 2000
    outer_parts: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in BUILD_VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; expected one of {BUILD_VARIANTS}")
        if self.d < 2:
            raise ParameterError(f"d must be at least 2, got {self.d}")
        if self.variant in ("standard", "mixed-large-d") and self.n % (2 * self.d):
            raise ParameterError(f"the {self.variant} variant needs 2d | n (n={self.n}, d={self.d})")
        if self.variant == "indivisible" and 2 * self.d > self.n:
            raise ParameterError(f"the indivisible variant needs 2d <= n (n={self.n}, d={self.d})")
        if self.r != "auto" and (not isinstance(self.r, int) or self.r < 1):
            raise ParameterError(f"r must be a positive integer or 'auto', got {self.r!r}")
        if self.copies is not None and self.copies < 1:
            raise ParameterError(f"copies must be positive, got {self.copies}")

    @property
    def n_copies(self) -> int:
        return self.n if self.copies is None else self.copies


# ---------------------------------------------------------------------------
# layouts


def bucket_layout_standard(n: int, d: int) -> BucketLayout:
    """Buckets of sizes ``k, 2k, ..., 2k, k`` with ``k = n / 2d``."""
    if d < 2 or n % (2 * d):
        raise ParameterError(f"standard layout needs d >= 2 and 2d | n (n={n}, d={d})")
    k = n // (2 * d)
    bounds = (0, *(k * (2 * i - 1) for i in range(1, d + 1)), n)
    return BucketLayout(n, d, bounds, "standard", t_size=k)


def default_outer_parts(n: int, d: int) -> int:
    """Number of intermediate parts for the mixed large-``d`` construction.

    Targets ``n / (ln n)^3`` clipped to ``[2, max(2, d // 2)]`` and prefers
    the largest divisor of ``d`` not above the target, in which case the
    plan degenerates to plain composition.
    """
    target = int(n / math.log(n) ** 3)
    target = min(max(2, target), max(2, d // 2))
    divisors = [q for q in range(2, target + 1) if d % q == 0]
    return divisors[-1] if divisors else target


def mixed_size_plan(n: int, d: int, variant: str, outer_parts: int | None = None) -> MixedSizePlan:
    """Bucket sizes for the indivisible and mixed large-``d`` layouts."""
    if variant == "indivisible":
        if d < 2 or 2 * d > n:
            raise ParameterError(f"indivisible plan needs 2 <= d <= n/2 (n={n}, d={d})")
        kp = n // (2 * d)
        m = n % 2
        c = (n - 2 * kp * d - m) // 2
        f = d - c - m
        parts, unit = d, 1
        sizes = (kp + m, *[2 * (kp + 1)] * c, *[2 * kp] * (d - 1 - c), kp)
    elif variant == "mixed-large-d":
        if d < 2 or n % (2 * d):
            raise ParameterError(f"mixed plan needs d >= 2 and 2d | n (n={n}, d={d})")
        unit = n // (2 * d)
        parts = default_outer_parts(n, d) if outer_parts is None else outer_parts
        if not 2 <= parts <= d:
            raise ParameterError(f"outer parts must lie in [2, d], got {parts}")
        kp, c, m = d // parts, d % parts, 0
        f = parts - c
        sizes = (
            kp * unit,
            *[2 * (kp + 1) * unit] * c,
            *[2 * kp * unit] * (parts - 1 - c),
            kp * unit,
        )
    else:
        raise ParameterError(f"no mixed plan for variant {variant!r}")
    plan = MixedSizePlan(n, d, variant, parts, kp, unit, f, c, m, sizes)
    assert sum(sizes) == n and min(f, c, m) >= 0 and c <= parts - 1, plan
    return plan


def bucket_layout_mixed(plan: MixedSizePlan) -> BucketLayout:
    bounds = [0]
    for s in plan.bucket_sizes:
        bounds.append(bounds[-1] + s)
    return BucketLayout(plan.n, plan.parts, tuple(bounds), plan.variant, t_size=plan.t_size)


def layout_for(cfg: BuildConfig) -> BucketLayout:
    if cfg.variant == "standard":
        return bucket_layout_standard(cfg.n, cfg.d)
    return bucket_layout_mixed(mixed_size_plan(cfg.n, cfg.d, cfg.variant, cfg.outer_parts))


# ---------------------------------------------------------------------------
# sampling and assembly


def sample_generators(layout: BucketLayout, r: int, rng: np.random.Generator) -> GeneratorBank:
    """Draw ``r`` uniform ``t_size``-subsets inside every interior bucket.

    ``G_0`` is ``{∅}`` and ``G_D`` is ``{χ_D}``.
    """
    if r < 1:
        raise ParameterError(f"r must be positive, got {r}")
    banks: list[tuple[int, ...]] = [(0,)]
    for i in range(1, layout.d):
        lo, hi = layout.bounds[i], layout.bounds[i + 1]
        elements = np.arange(lo, hi)
        banks.append(tuple(
            mask_of(int(e) for e in rng.choice(elements, layout.t_size, replace=False))
            for _ in range(r)
        ))
    banks.append((layout.masks[-1],))
    return GeneratorBank(layout, tuple(banks), r)


def _pair_members(bank: GeneratorBank) -> list[int]:
    buckets, D = bank.buckets, bank.parts
    out = []
    for i in range(D):
        comps = [buckets[i] ^ t for t in bank.banks[i]]
        for j in range(1, D + 1):
            if j == i:
                continue
            for tj in bank.banks[j]:
                out.extend(ci | tj for ci in comps)
    return out


def _family_variant(layout: BucketLayout) -> str:
    return "mixed-outer" if layout.variant == "mixed-large-d" else layout.variant


def assemble_pair_family(bank: GeneratorBank, seed: int = 0, plan: MixedSizePlan | None = None) -> GalvinFamily:
    """All sets ``(χ_i ∖ T_i) ∪ T_j`` for buckets ``i ≠ j`` with ``i < D`` and ``j > 0``.

    Pairs with ``i = D`` or ``j = 0`` would give sets of the wrong size and
    can never appear in a witness, so they are left out.
    """
    layout = bank.layout
    members = _pair_members(bank)
    return GalvinFamily(
        n=layout.n,
        d=layout.d,
        masks=tuple(members),
        variant=_family_variant(layout),
        seed=seed,
        copies=1,
        raw_count=len(members),
        plan=plan,
        sources=(BuiltCopy(tuple(range(layout.n)), bank),),
    )


def resolve_generator_count(cfg: BuildConfig) -> int:
    """``cfg.r`` itself, or the calibrated count when it is ``'auto'``."""
    if cfg.r != "auto":
        return int(cfg.r)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & (2**64 - 1), _CALIBRATION_STREAM]))
    return calibrate_generator_count(
        cfg.n, cfg.d, trials=cfg.calibration_trials, rng=rng,
        variant=cfg.variant, outer_parts=cfg.outer_parts,
    )


def _plan_for(cfg: BuildConfig) -> MixedSizePlan | None:
    if cfg.variant == "standard":
        return None
    return mixed_size_plan(cfg.n, cfg.d, cfg.variant, cfg.outer_parts)


def build_single_family(cfg: BuildConfig, rng: np.random.Generator) -> GalvinFamily:
    """One layout, one bank, one pair family. The bank is kept on the result."""
    r = resolve_generator_count(cfg)
    layout = layout_for(cfg)
    bank = sample_generators(layout, r, rng)
    return assemble_pair_family(bank, seed=cfg.seed, plan=_plan_for(cfg))


def _build_copy(cfg: BuildConfig, layout: BucketLayout, r: int, index: int) -> tuple[BuiltCopy, list[int]]:
    rng = copy_stream(cfg.seed, index)
    if cfg.n_copies == 1:
        perm = tuple(range(cfg.n))
    else:
        perm = tuple(int(p) for p in rng.permutation(cfg.n))
    bank = sample_generators(layout, r, rng)
    copy = BuiltCopy(perm, bank)
    return copy, _pair_members(copy.mapped)


def _permuted_union(cfg: BuildConfig, threads: int) -> GalvinFamily:
    r = resolve_generator_count(cfg)
    layout = layout_for(cfg)
    log.debug("building %d copies with r=%d on layout %s", cfg.n_copies, r, layout.sizes)

    def work(index: int) -> tuple[BuiltCopy, list[int]]:
        return _build_copy(cfg, layout, r, index)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(cfg.n_copies)))
    else:
        results = [work(i) for i in range(cfg.n_copies)]
    members = [m for _, ms in results for m in ms]
    return GalvinFamily(
        n=cfg.n,
        d=layout.d,
        masks=tuple(members),
        variant=_family_variant(layout),
        seed=cfg.seed,
        copies=cfg.n_copies,
        raw_count=len(members),
        plan=_plan_for(cfg),
        sources=tuple(c for c, _ in results),
    )


def build_galvin(cfg: BuildConfig, threads: int = 1) -> GalvinFamily:
    """Union of ``cfg.n_copies`` independently permuted single families.

    Copy ``i`` draws its permutation and bank from a stream derived from
    ``(cfg.seed, i)``, so the result does not depend on ``threads``. With a
    single copy the permutation is the identity. The mixed large-``d``
    variant composes the union with inner families built per member size.
    """
    if cfg.variant != "mixed-large-d":
        return _permuted_union(cfg, threads)

    outer = _permuted_union(cfg, threads)
    k = cfg.n // (2 * cfg.d)
    cache: dict[int, GalvinFamily] = {}

    def inner(size: int) -> GalvinFamily:
        if size not in cache:
            b = size // (2 * k)
            if b == 1:
                cache[size] = identity_family(size)
            else:
                sub = BuildConfig(
                    n=size, d=b, variant="standard", r=cfg.r,
                    copies=None if cfg.copies is None else min(cfg.copies, size),
                    seed=derive_seed(cfg.seed, _INNER_STREAM, size),
                    calibration_trials=cfg.calibration_trials,
                )
                cache[size] = build_galvin(sub, threads=threads)
        return cache[size]

    composed = compose_families(outer, inner, d=cfg.d)
    composed.variant = "mixed-large-d"
    composed.seed = cfg.seed
    composed.copies = cfg.n_copies
    return composed


def identity_family(m: int) -> GalvinFamily:
    """The 1-Galvin family ``{[m]}``."""
    return GalvinFamily(n=m, d=1, masks=(full_mask(m),))


def compose_families(
    outer: GalvinFamily,
    inner_builder: Callable[[int], GalvinFamily],
    d: int | None = None,
) -> GalvinFamily:
    """Build an inner family inside every member of ``outer`` and take the union.

    ``inner_builder(size)`` returns a family over ``[0, size)``; it is mapped
    into member ``S`` by the order-preserving bijection onto the sorted
    elements of ``S``. If ``outer`` is ``a``-Galvin and every inner family is
    ``b``-Galvin the union is ``ab``-Galvin.
    """
    inner: dict[int, GalvinFamily] = {}
    members: list[int] = []
    for s in outer.all_masks():
        support = [e for e in range(outer.n) if s >> e & 1]
        fam = inner_builder(len(support))
        if fam.n != len(support):
            raise ParameterError(f"inner family has n={fam.n}, member has {len(support)} elements")
        inner[s] = fam
        members.extend(expand_mask(t, support) for t in fam.all_masks())
    if d is None:
        degrees = {fam.d for fam in inner.values()}
        if len(degrees) != 1:
            raise ParameterError("inner families differ in d; pass the composed d explicitly")
        d = outer.d * degrees.pop()
    return GalvinFamily(
        n=outer.n,
        d=d,
        masks=tuple(members),
        variant="standard",
        seed=outer.seed,
        copies=outer.copies,
        raw_count=len(members),
        composition=Composition(outer, inner),
    )


def relabel(fam: GalvinFamily, perm: tuple[int, ...]) -> GalvinFamily:
    """Image of ``fam`` under ``e -> perm[e]`` (provenance is dropped)."""
    return replace(
        fam, masks=tuple(permute_mask(m, perm) for m in fam.masks),
        sources=(), composition=None, _lookup=None,
    )


# ---------------------------------------------------------------------------
# calibration


def step_success_rate(
    layout: BucketLayout, trials: int, rng: np.random.Generator
) -> tuple[int, int]:
    """Monte Carlo count of balanced greedy steps: ``(hits, steps)``.

    Each trial draws a random challenge set ``A``, orders the buckets
    greedily and walks the sequential balancing. At step ``j`` the number
    of elements of ``A`` the new generator must contain is fixed by the
    earlier (assumed balanced) steps; a uniformly random generator of the
    bucket hits it with hypergeometric probability, which is sampled.
    """
    from .verify import greedy_order

    n, D, t = layout.n, layout.d, layout.t_size
    h = (n + 1) // 2
    buckets, doubled = layout.masks, layout.doubled
    sizes = layout.sizes
    hits = steps = 0
    for _ in range(trials):
        a = mask_of(int(e) for e in rng.choice(n, h, replace=False))
        pi = greedy_order(bucket_errors(a, buckets, doubled))
        prev_comp_size = sizes[0]
        prev_comp_hits = (a & buckets[0]).bit_count()
        for j in range(1, D):
            b = pi[j]
            part = prev_comp_size + t
            need = (part + part % 2) // 2 - prev_comp_hits
            in_bucket = (a & buckets[b]).bit_count()
            x = hypergeom_sample(HypergeomParams(in_bucket, sizes[b], t), rng)
            steps += 1
            hits += x == need
            prev_comp_size = sizes[b] - t
            prev_comp_hits = in_bucket - need
    return hits, steps


def calibrate_generator_count(
    n: int,
    d: int,
    target_step_success: float | None = None,
    trials: int = 2000,
    rng: np.random.Generator | None = None,
    variant: str = "standard",
    outer_parts: int | None = None,
) -> int:
    """Generator count ``r`` that makes each greedy step succeed w.p. ``target_step_success``.

    With per-step hit rate ``y`` estimated by :func:`step_success_rate`,
    ``r`` random generators all miss with probability ``(1 - y)^r <=
    exp(-r y)``, so ``r = ceil(-ln(1 - target) / y)``. The default target
    ``1 - 1/(4d)`` gives ``r = ceil(ln(4d) / y)``.
    """
    if target_step_success is None:
        target_step_success = 1 - 1 / (4 * d)
    if not 0 < target_step_success < 1:
        raise ParameterError("target_step_success must lie in (0, 1)")
    if trials < 1:
        raise CalibrationError("no calibration trials requested")
    if rng is None:
        rng = np.random.default_rng(0)
    cfg = BuildConfig(n=n, d=d, variant=variant, r=1, outer_parts=outer_parts)
    layout = layout_for(cfg)
    if layout.d < 2:
        return 1
    hits, steps = step_success_rate(layout, trials, rng)
    if hits == 0:
        raise CalibrationError(f"no balanced step in {steps} samples; raise trials or set r")
    y = hits / steps
    r = max(1, math.ceil(-math.log(1 - target_step_success) / y))
    log.debug("calibration n=%d d=%d: y=%.4f over %d steps -> r=%d", n, d, y, steps, r)
    return r


# ---------------------------------------------------------------------------
# classic baseline


def interval_galvin(n: int) -> GalvinFamily:
    """The ``n/2`` cyclic intervals ``{i, ..., i + n/2 - 1}``, ``0 <= i < n/2``.

    As a 2-Galvin family each interval also stands for its complement.
    """
    if n < 4 or n % 4:
        raise ParameterError(f"interval family needs 4 | n, got {n}")
    half = n // 2
    masks = tuple(interval_mask(i, i + half) for i in range(half))
    return GalvinFamily(n=n, d=2, masks=masks, variant="interval", implicit_complements=True)
