"""Exact and asymptotic probabilities behind the construction.

Exact quantities are ``fractions.Fraction`` built from ``math.comb``;
asymptotic ones are floats (or ``Decimal`` where ``2**n`` overflows a float).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import ParameterError

#: Constant inside the logarithm of the concentration threshold
#: ``sqrt(k ln(C d))``. With 16 the union bound over the ``d + 1`` buckets
#: fails with probability at most ``2 (d + 1) / (16 d) < 1/4`` for ``d >= 2``.
UNION_BOUND_CONSTANT = 16

#: Factor in the exponent of the per-step balance probability
#: ``sqrt(4 / (k π)) exp(-(4/k) (R/2 - t)^2)``.
CONCENTRATION_EXPONENT = 4

#: Above this population size sampling switches from the exact inverse CDF
#: to numpy's rejection sampler.
EXACT_SAMPLING_LIMIT = 10_000


@dataclass(frozen=True)
class HypergeomParams:
    """``H(K, N, n_draw)``: successes ``K`` among ``N``, ``n_draw`` drawn without replacement."""

    K: int
    N: int
    n_draw: int

    def __post_init__(self) -> None:
        if not (0 <= self.K <= self.N and 0 <= self.n_draw <= self.N):
            raise ParameterError(f"invalid hypergeometric parameters {self}")

    @property
    def support(self) -> range:
        lo = max(0, self.n_draw - (self.N - self.K))
        return range(lo, min(self.K, self.n_draw) + 1)

    @property
    def mean(self) -> Fraction:
        return Fraction(self.n_draw * self.K, self.N) if self.N else Fraction(0)


def binom_exact(n: int, m: int) -> int:
    """``C(n, m)`` as an exact integer, zero outside ``0 <= m <= n``."""
    if n < 0:
        raise ParameterError(f"binomial needs n >= 0, got {n}")
    if m < 0 or m > n:
        return 0
    return math.comb(n, m)


def hypergeom_pmf(p: HypergeomParams, x: int) -> Fraction:
    return Fraction(
        binom_exact(p.K, x) * binom_exact(p.N - p.K, p.n_draw - x),
        binom_exact(p.N, p.n_draw),
    )


def hypergeom_pmf_float(p: HypergeomParams, x: int) -> float:
    return float(hypergeom_pmf(p, x))


@lru_cache(maxsize=4096)
def _cdf_table(p: HypergeomParams) -> tuple[int, np.ndarray]:
    support = p.support
    total = binom_exact(p.N, p.n_draw)
    counts = [binom_exact(p.K, x) * binom_exact(p.N - p.K, p.n_draw - x) for x in support]
    running, cdf = 0, []
    for c in counts:
        running += c
        cdf.append(float(Fraction(running, total)))
    cdf[-1] = 1.0
    return support.start, np.array(cdf)


def hypergeom_sample(p: HypergeomParams, rng: np.random.Generator) -> int:
    """One draw from ``H(K, N, n_draw)``.

    Inverse CDF over the exact pmf up to :data:`EXACT_SAMPLING_LIMIT`,
    numpy's ratio-of-uniforms rejection sampler above it.
    """
    if p.N > EXACT_SAMPLING_LIMIT:
        if p.n_draw == 0:
            return 0
        return int(rng.hypergeometric(p.K, p.N - p.K, p.n_draw))
    lo, cdf = _cdf_table(p)
    return lo + int(np.searchsorted(cdf, rng.random(), side="right"))


def hoeffding_tail_bound(x: float, k: int) -> float:
    """Upper bound ``2 exp(-2x^2 / 2k)`` on ``P(|R_i| > x)`` for a bucket of size ``2k``."""
    if x < 0 or k < 1:
        raise ParameterError("need x >= 0 and k >= 1")
    return 2.0 * math.exp(-x * x / k)


def concentration_threshold(k: int, d: int, constant: int = UNION_BOUND_CONSTANT) -> float:
    """``sqrt(k ln(C d))``: the bucket error level that holds w.p. >= 3/4."""
    return math.sqrt(k * math.log(constant * d))


def two_sided_tail(p: HypergeomParams, x: float) -> Fraction:
    """Exact ``P(|X - E X| > x)``."""
    mean = p.mean
    return sum((hypergeom_pmf(p, v) for v in p.support if abs(v - mean) > x), Fraction(0))


def binom_approx(n: int, m: int) -> Decimal:
    """Main term ``2^n sqrt(2/(nπ)) exp(-2m^2/n)`` of ``C(n, n/2 - m)``.

    Returned as a ``Decimal`` because ``2^n`` leaves float range quickly.
    """
    if n < 2 or abs(m) * 2 > n:
        raise ParameterError("need n >= 2 and |m| <= n/2")
    with localcontext() as ctx:
        ctx.prec = 40
        pi = Decimal(math.pi)
        return (
            Decimal(2) ** n
            * (Decimal(2) / (n * pi)).sqrt()
            * (Decimal(-2 * m * m) / n).exp()
        )


def binom_approx_error(n: int, m: int) -> float:
    """Relative error of :func:`binom_approx` against the exact ``C(n, n/2 - m)``."""
    if n % 2:
        raise ParameterError("n must be even so that n/2 - m is an integer")
    exact = binom_exact(n, n // 2 - m)
    with localcontext() as ctx:
        ctx.prec = 40
        return float(binom_approx(n, m) / Decimal(exact) - 1)


def balance_prob_exact(t: int, R: int, k: int) -> Fraction:
    """Probability that ``|A ∩ T| = k/2 + t`` for a uniform ``k``-subset ``T`` of a
    ``2k`` bucket holding ``k + R`` elements of ``A``."""
    if k < 2 or k % 2:
        raise ParameterError(f"k must be even and >= 2, got {k}")
    if abs(R) > k:
        raise ParameterError(f"|R| must not exceed k, got R={R}")
    x = k // 2 + t
    if not 0 <= x <= k:
        return Fraction(0)
    return hypergeom_pmf(HypergeomParams(k + R, 2 * k, k), x)


def balance_prob_asymptotic(t: float, R: float, k: int) -> float:
    if k < 1:
        raise ParameterError("k must be positive")
    c = CONCENTRATION_EXPONENT
    return math.sqrt(4 / (k * math.pi)) * math.exp(-(c / k) * (R / 2 - t) ** 2)


@dataclass(frozen=True)
class CountingBound:
    """``|F| >= ratio ** (1 / exponent)`` with ``ratio`` exact."""

    ratio: Fraction
    exponent: int

    @property
    def value(self) -> float:
        if self.exponent == 1:
            return float(self.ratio)
        log_ratio = math.log(self.ratio.numerator) - math.log(self.ratio.denominator)
        return math.exp(log_ratio / self.exponent)

    @property
    def ceiling(self) -> int:
        """Smallest integer ``F`` with ``F ** exponent >= ratio``."""
        guess = max(1, math.floor(self.value))
        while guess > 1 and Fraction(guess - 1) ** self.exponent >= self.ratio:
            guess -= 1
        while Fraction(guess) ** self.exponent < self.ratio:
            guess += 1
        return guess


def counting_lower_bound(n: int, d: int) -> CountingBound:
    """Counting bound ``|F|^(d-1) >= C(n, n/2) / C(n/d, k)^d`` with ``k = n/2d``."""
    if d < 2 or n % (2 * d):
        raise ParameterError(f"counting bound needs d >= 2 and 2d | n, got n={n}, d={d}")
    k = n // (2 * d)
    ratio = Fraction(binom_exact(n, n // 2), binom_exact(n // d, k) ** d)
    return CountingBound(ratio, d - 1)


def degree_lower_bound(d: int) -> Fraction:
    """``d^2 / 2``: every element lies in at least ``d/2`` members of size ``n/d``."""
    if d < 1:
        raise ParameterError("d must be positive")
    return Fraction(d * d, 2)
