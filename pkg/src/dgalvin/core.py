"""Ground-set value types, bucket layouts and error-term arithmetic.

Subsets of the ground set ``{0, ..., n-1}`` are Python integers used as bit
masks (bit ``e`` set means element ``e`` is present). :class:`SubsetMask`
wraps such an integer together with its width for the public API; the hot
paths in :mod:`dgalvin.construct` and :mod:`dgalvin.verify` work on the raw
integers directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence


class GalvinError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(GalvinError, ValueError):
    """Invalid combination of construction or bound parameters."""


class DimensionError(GalvinError, ValueError):
    """Operands live on ground sets of different sizes."""


class BudgetExceeded(GalvinError):
    """A search or enumeration ran past its configured budget.

    This is a resource outcome; it never means "not handled".
    """


class CalibrationError(GalvinError):
    """The generator-count calibration observed no successes."""


# ---------------------------------------------------------------------------
# raw mask helpers


def mask_of(elements: Iterable[int]) -> int:
    value = 0
    for e in elements:
        value |= 1 << e
    return value


def elements_of(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def interval_mask(lo: int, hi: int) -> int:
    """Mask of the half-open range ``[lo, hi)``."""
    return ((1 << hi) - 1) ^ ((1 << lo) - 1)


def full_mask(n: int) -> int:
    return (1 << n) - 1


def permute_mask(mask: int, perm: Sequence[int]) -> int:
    """Image of ``mask`` under ``e -> perm[e]``."""
    out = 0
    for e in elements_of(mask):
        out |= 1 << perm[e]
    return out


def compress_mask(mask: int, support: Sequence[int]) -> int:
    """Relabel ``mask & support`` onto ``0..len(support)-1`` (order preserving)."""
    out = 0
    for i, e in enumerate(support):
        if mask >> e & 1:
            out |= 1 << i
    return out


def expand_mask(local: int, support: Sequence[int]) -> int:
    """Inverse of :func:`compress_mask`."""
    out = 0
    for i in elements_of(local):
        out |= 1 << support[i]
    return out


def imbalance(a: int, s: int) -> int:
    """``|A ∩ S| - |Ā ∩ S|``, i.e. twice the amount by which ``S`` is off balance."""
    return 2 * (a & s).bit_count() - s.bit_count()


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class GroundSet:
    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError(f"ground set needs n >= 2, got {self.n}")

    @property
    def full(self) -> SubsetMask:
        return SubsetMask(self.n, full_mask(self.n))

    @property
    def empty(self) -> SubsetMask:
        return SubsetMask(self.n, 0)

    def subset(self, elements: Iterable[int]) -> SubsetMask:
        return SubsetMask.from_elements(self.n, elements)


@dataclass(frozen=True, order=True)
class SubsetMask:
    """A subset of ``{0, ..., n-1}`` stored as an integer bit mask."""

    n: int
    bits: int

    def __post_init__(self) -> None:
        if self.bits < 0 or self.bits >> self.n:
            raise DimensionError(f"mask {self.bits:#x} does not fit in {self.n} bits")

    @classmethod
    def from_elements(cls, n: int, elements: Iterable[int]) -> SubsetMask:
        elements = list(elements)
        bad = [e for e in elements if not 0 <= e < n]
        if bad:
            raise DimensionError(f"elements {bad} outside ground set of size {n}")
        return cls(n, mask_of(elements))

    def _check(self, other: SubsetMask) -> None:
        if self.n != other.n:
            raise DimensionError(f"ground sets differ: {self.n} vs {other.n}")

    def __and__(self, other: SubsetMask) -> SubsetMask:
        self._check(other)
        return SubsetMask(self.n, self.bits & other.bits)

    def __or__(self, other: SubsetMask) -> SubsetMask:
        self._check(other)
        return SubsetMask(self.n, self.bits | other.bits)

    def __xor__(self, other: SubsetMask) -> SubsetMask:
        self._check(other)
        return SubsetMask(self.n, self.bits ^ other.bits)

    def __sub__(self, other: SubsetMask) -> SubsetMask:
        self._check(other)
        return SubsetMask(self.n, self.bits & ~other.bits)

    def complement(self) -> SubsetMask:
        return SubsetMask(self.n, full_mask(self.n) ^ self.bits)

    def issubset(self, other: SubsetMask) -> bool:
        self._check(other)
        return self.bits & ~other.bits == 0

    def isdisjoint(self, other: SubsetMask) -> bool:
        self._check(other)
        return self.bits & other.bits == 0

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, e: int) -> bool:
        return 0 <= e < self.n and bool(self.bits >> e & 1)

    def __iter__(self) -> Iterator[int]:
        return elements_of(self.bits)

    def elements(self) -> list[int]:
        return list(elements_of(self.bits))

    def __repr__(self) -> str:
        return f"SubsetMask(n={self.n}, {{{', '.join(map(str, self))}}})"


def as_bits(a: SubsetMask | int, n: int) -> int:
    """Accept either a :class:`SubsetMask` or a raw mask on an ``n``-element ground set."""
    if isinstance(a, SubsetMask):
        if a.n != n:
            raise DimensionError(f"ground sets differ: {a.n} vs {n}")
        return a.bits
    if a < 0 or a >> n:
        raise DimensionError(f"mask {a:#x} does not fit in {n} bits")
    return a


LAYOUT_VARIANTS = ("standard", "mixed-large-d", "indivisible")


@dataclass(frozen=True)
class BucketLayout:
    """Partition of ``[0, n)`` into ``d + 1`` consecutive buckets.

    ``bounds`` holds the ``d + 2`` cut points ``0 = b_0 < ... < b_{d+1} = n``;
    bucket ``i`` is ``[b_i, b_{i+1})``. ``d`` is the number of parts of the
    partitions the layout produces (for the mixed layout that is the number of
    intermediate parts, not the final ``d``).
    """

    n: int
    d: int
    bounds: tuple[int, ...]
    variant: str = "standard"
    t_size: int = 0

    def __post_init__(self) -> None:
        if self.variant not in LAYOUT_VARIANTS:
            raise ParameterError(f"unknown layout variant {self.variant!r}")
        if len(self.bounds) != self.d + 2:
            raise ParameterError("layout needs d + 2 cut points")
        if self.bounds[0] != 0 or self.bounds[-1] != self.n:
            raise ParameterError("layout cut points must start at 0 and end at n")
        if any(lo >= hi for lo, hi in zip(self.bounds, self.bounds[1:])):
            raise ParameterError("layout buckets must be non-empty")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in zip(self.bounds, self.bounds[1:]))

    @cached_property
    def masks(self) -> tuple[int, ...]:
        return tuple(interval_mask(lo, hi) for lo, hi in zip(self.bounds, self.bounds[1:]))

    def bucket(self, i: int) -> SubsetMask:
        return SubsetMask(self.n, self.masks[i])

    @property
    def doubled(self) -> bool:
        """Whether error terms must be kept at twice their value (odd buckets)."""
        return any(s % 2 for s in self.sizes)


@dataclass(frozen=True)
class GeneratorBank:
    """The sampled generator sets ``G_0 .. G_D`` of one single family.

    ``buckets`` repeats the layout's bucket masks; for a permuted copy both
    ``buckets`` and ``banks`` hold the images under the copy's permutation
    while ``layout`` keeps the original interval layout.
    """

    layout: BucketLayout
    banks: tuple[tuple[int, ...], ...]
    r: int
    buckets: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.buckets:
            object.__setattr__(self, "buckets", self.layout.masks)
        if len(self.banks) != len(self.buckets):
            raise ParameterError("one generator list per bucket required")

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def parts(self) -> int:
        return len(self.buckets) - 1

    def permuted(self, perm: Sequence[int]) -> GeneratorBank:
        return GeneratorBank(
            layout=self.layout,
            banks=tuple(tuple(permute_mask(t, perm) for t in g) for g in self.banks),
            r=self.r,
            buckets=tuple(permute_mask(b, perm) for b in self.buckets),
        )


@dataclass(frozen=True)
class BuiltCopy:
    """One permuted copy ``σ(F)``: the permutation and the bank of ``F``."""

    perm: tuple[int, ...]
    bank: GeneratorBank

    @cached_property
    def mapped(self) -> GeneratorBank:
        if all(i == p for i, p in enumerate(self.perm)):
            return self.bank
        return self.bank.permuted(self.perm)


@dataclass(frozen=True)
class MixedSizePlan:
    """Bucket sizes for the layouts whose parts are not all of one size.

    ``unit`` is 1 for the indivisible variant and ``k = n / 2d`` for the
    mixed large-``d`` variant; member sets then have sizes ``2 k' unit``,
    ``2 k' unit + 1`` and ``2 (k' + 1) unit`` and a partition uses ``f``,
    ``m`` and ``c`` of them respectively.
    """

    n: int
    d: int
    variant: str
    parts: int
    k_prime: int
    unit: int
    f: int
    c: int
    m: int
    bucket_sizes: tuple[int, ...]

    @property
    def t_size(self) -> int:
        return self.k_prime * self.unit

    @property
    def small(self) -> int:
        return 2 * self.k_prime * self.unit

    @property
    def large(self) -> int:
        return 2 * (self.k_prime + 1) * self.unit

    def part_sizes(self) -> list[int]:
        return sorted([self.small] * self.f + [self.small + 1] * self.m + [self.large] * self.c)


@dataclass(frozen=True)
class Composition:
    """Provenance of a composed family: outer family plus one inner family per outer member.

    Inner families live on ``[0, |S|)``; member ``S`` of the outer family
    is mapped onto them by the order-preserving bijection.
    """

    outer: GalvinFamily
    inner: dict[int, GalvinFamily]


FAMILY_VARIANTS = ("standard", "mixed-large-d", "indivisible", "interval", "mixed-outer")


@dataclass(eq=False)
class GalvinFamily:
    """A candidate ``d``-Galvin family with the metadata needed to reproduce and verify it.

    ``masks`` is sorted and duplicate free. ``raw_count`` is the number of
    sets produced before deduplication. With ``implicit_complements`` (the
    classic Galvin families) every stored set also stands for its complement.
    """

    n: int
    d: int
    masks: tuple[int, ...]
    variant: str = "standard"
    seed: int = 0
    copies: int = 1
    raw_count: int = 0
    implicit_complements: bool = False
    plan: MixedSizePlan | None = None
    sources: tuple[BuiltCopy, ...] = ()
    composition: Composition | None = None
    _lookup: frozenset[int] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.variant not in FAMILY_VARIANTS:
            raise ParameterError(f"unknown family variant {self.variant!r}")
        self.masks = tuple(sorted(set(self.masks)))
        limit = 1 << self.n
        if any(m < 0 or m >= limit for m in self.masks):
            raise DimensionError(f"member outside ground set of size {self.n}")
        if not self.raw_count:
            self.raw_count = len(self.masks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GalvinFamily):
            return NotImplemented
        return self._key() == other._key()

    def _key(self) -> tuple:
        return (
            self.n, self.d, self.masks, self.variant, self.seed,
            self.copies, self.raw_count, self.implicit_complements,
        )

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def size(self) -> int:
        return len(self.masks)

    @property
    def sets(self) -> list[SubsetMask]:
        return [SubsetMask(self.n, m) for m in self.masks]

    @property
    def challenge_size(self) -> int:
        """Size of the sets ``A`` the family must handle."""
        return (self.n + 1) // 2

    def all_masks(self) -> tuple[int, ...]:
        if not self.implicit_complements:
            return self.masks
        full = full_mask(self.n)
        return tuple(sorted(set(self.masks) | {full ^ m for m in self.masks}))

    def __contains__(self, mask: int | SubsetMask) -> bool:
        if isinstance(mask, SubsetMask):
            if mask.n != self.n:
                return False
            mask = mask.bits
        if self._lookup is None:
            self._lookup = frozenset(self.all_masks())
        return mask in self._lookup

    def index(self, mask: int) -> int:
        """Position of ``mask`` in :meth:`all_masks`."""
        return self.all_masks().index(mask)


@dataclass(frozen=True)
class ErrorVector:
    """Per-bucket imbalance of a challenge set ``A``.

    With ``doubled`` the values are ``2|A ∩ χ_i| - |χ_i|`` instead of
    ``|A ∩ χ_i| - |χ_i|/2``, which keeps odd buckets in integers.
    """

    values: tuple[int, ...]
    a: SubsetMask
    doubled: bool = False

    @property
    def d(self) -> int:
        return len(self.values) - 1

    @property
    def total(self) -> int:
        return sum(self.values)


@dataclass(frozen=True)
class PartitionWitness:
    """Ordered member sets that partition the ground set, balanced on some ``A``.

    ``balances[i]`` is ``|S_i ∩ A| - |S_i ∖ A|``: zero for a balanced set,
    ``+1`` for the one odd set allowed in the indivisible variant.
    """

    n: int
    sets: tuple[int, ...]
    balances: tuple[int, ...]

    @classmethod
    def of(cls, n: int, a: int, sets: Sequence[int]) -> PartitionWitness:
        return cls(n, tuple(sets), tuple(imbalance(a, s) for s in sets))

    def subsets(self) -> list[SubsetMask]:
        return [SubsetMask(self.n, s) for s in self.sets]


# ---------------------------------------------------------------------------
# operations


def bucket_errors(a: int, buckets: Sequence[int], doubled: bool) -> tuple[int, ...]:
    if doubled:
        return tuple(2 * (a & b).bit_count() - b.bit_count() for b in buckets)
    return tuple((a & b).bit_count() - b.bit_count() // 2 for b in buckets)


def error_terms(a: SubsetMask | int, layout: BucketLayout) -> ErrorVector:
    """Imbalance of ``a`` on every bucket of ``layout``."""
    bits = as_bits(a, layout.n)
    values = bucket_errors(bits, layout.masks, layout.doubled)
    return ErrorVector(values, SubsetMask(layout.n, bits), layout.doubled)


def _check_permutation(pi: Sequence[int], size: int) -> None:
    if len(pi) != size or sorted(pi) != list(range(size)):
        raise ParameterError(f"{tuple(pi)} is not a permutation of 0..{size - 1}")


def prefix_error(errors: ErrorVector | Sequence[int], pi: Sequence[int], i: int) -> int:
    """``R(π([0, i]))``: total error of the first ``i + 1`` buckets in order ``pi``."""
    values = errors.values if isinstance(errors, ErrorVector) else tuple(errors)
    _check_permutation(pi, len(values))
    if not 0 <= i < len(values):
        raise IndexError(f"prefix index {i} out of range 0..{len(values) - 1}")
    return sum(values[pi[j]] for j in range(i + 1))
