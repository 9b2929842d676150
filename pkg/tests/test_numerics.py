import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgalvin import numerics
from dgalvin.core import ParameterError
from dgalvin.numerics import (
    HypergeomParams,
    balance_prob_asymptotic,
    balance_prob_exact,
    binom_approx,
    binom_approx_error,
    binom_exact,
    counting_lower_bound,
    degree_lower_bound,
    hoeffding_tail_bound,
    hypergeom_pmf,
    hypergeom_sample,
)


def pascal(rows):
    """Oracle: Pascal's triangle by repeated addition."""
    tri = [[1]]
    for _ in range(rows):
        prev = tri[-1]
        tri.append([1] + [prev[i] + prev[i + 1] for i in range(len(prev) - 1)] + [1])
    return tri


def enumerate_pmf(K, N, draw):
    """Oracle: count draws by listing every subset of the population."""
    counts = {}
    for sample in combinations(range(N), draw):
        x = sum(1 for e in sample if e < K)
        counts[x] = counts.get(x, 0) + 1
    total = sum(counts.values())
    return {x: Fraction(c, total) for x, c in counts.items()}


def test_binom_exact_against_pascal():
    tri = pascal(30)
    for n in range(31):
        for m in range(-2, n + 3):
            expected = tri[n][m] if 0 <= m <= n else 0
            assert binom_exact(n, m) == expected
    assert binom_exact(4, 2) == 6 and binom_exact(8, 4) == 70


@pytest.mark.parametrize("K,N,draw", [(2, 4, 2), (4, 8, 4), (3, 7, 3), (0, 5, 2), (5, 5, 3), (6, 10, 0)])
def test_hypergeom_pmf_against_enumeration(K, N, draw):
    oracle = enumerate_pmf(K, N, draw)
    p = HypergeomParams(K, N, draw)
    for x in range(-1, draw + 2):
        assert hypergeom_pmf(p, x) == oracle.get(x, 0)


def test_hypergeom_pmf_examples():
    assert hypergeom_pmf(HypergeomParams(2, 4, 2), 1) == Fraction(2, 3)
    assert hypergeom_pmf(HypergeomParams(3, 9, 0), 0) == 1
    p = HypergeomParams(4, 8, 4)
    assert sum(hypergeom_pmf(p, x) for x in range(5)) == 1


@settings(max_examples=200)
@given(st.integers(0, 64).flatmap(lambda N: st.tuples(st.integers(0, N), st.just(N), st.integers(0, N))))
def test_hypergeom_pmf_is_distribution(args):
    p = HypergeomParams(*args)
    values = [hypergeom_pmf(p, x) for x in range(p.n_draw + 1)]
    assert all(v >= 0 for v in values)
    assert sum(values) == 1


def test_hypergeom_params_validation():
    with pytest.raises(ParameterError):
        HypergeomParams(5, 4, 2)
    with pytest.raises(ParameterError):
        HypergeomParams(2, 4, 5)


def test_hypergeom_sample_degenerate():
    rng = np.random.default_rng(1)
    assert {hypergeom_sample(HypergeomParams(0, 10, 4), rng) for _ in range(50)} == {0}
    assert {hypergeom_sample(HypergeomParams(10, 10, 4), rng) for _ in range(50)} == {4}
    assert {hypergeom_sample(HypergeomParams(0, 20_000, 7), rng) for _ in range(20)} == {0}
    assert {hypergeom_sample(HypergeomParams(20_000, 20_000, 7), rng) for _ in range(20)} == {7}


def test_hypergeom_sample_frequency():
    rng = np.random.default_rng(2)
    draws = 100_000
    p = 2 / 3
    hits = sum(hypergeom_sample(HypergeomParams(2, 4, 2), rng) == 1 for _ in range(draws))
    sigma = math.sqrt(draws * p * (1 - p))
    assert abs(hits - draws * p) <= 3 * sigma


@pytest.mark.parametrize("params", [HypergeomParams(30, 60, 10), HypergeomParams(9_000, 20_000, 25)])
def test_hypergeom_sample_matches_pmf(params):
    """Both sampling routes pass the same per-value 3-sigma frequency test."""
    rng = np.random.default_rng(3)
    draws = 20_000
    counts = np.bincount([hypergeom_sample(params, rng) for _ in range(draws)], minlength=params.n_draw + 1)
    for x in params.support:
        q = float(hypergeom_pmf(params, x))
        sigma = math.sqrt(draws * q * (1 - q))
        assert abs(counts[x] - draws * q) <= 3 * sigma + 1


def test_hoeffding_examples():
    assert hoeffding_tail_bound(0, 5) == 2
    assert hoeffding_tail_bound(math.sqrt(7), 7) == pytest.approx(2 / math.e)
    d, k = 4, 9
    assert hoeffding_tail_bound(math.sqrt(k * math.log(16 * d)), k) == pytest.approx(0.03125)
    with pytest.raises(ParameterError):
        hoeffding_tail_bound(-1, 3)


@pytest.mark.parametrize("k", [1, 2, 5, 8, 16, 32])
def test_hoeffding_dominates_exact_tail(k):
    for d in (1, 2, 3, 5):
        p = HypergeomParams(d * k, 2 * d * k, 2 * k)
        for x in range(2 * k + 1):
            assert numerics.two_sided_tail(p, x) <= Fraction(hoeffding_tail_bound(x, k))


def test_binom_approx_central_value():
    approx = binom_approx(100, 0)
    assert float(approx) == pytest.approx(1.0115e29, rel=1e-4)
    assert binom_approx_error(100, 0) == pytest.approx(0.0025, abs=5e-5)
    assert binom_approx(60, 3) == binom_approx(60, -3)
    assert binom_approx(50, 0) == binom_approx(50, -0)


def test_binom_approx_error_shrinks_with_n():
    assert abs(binom_approx_error(400, 10)) < abs(binom_approx_error(100, 10))


@pytest.mark.parametrize("n", [100, 200, 400, 800])
def test_binom_approx_grid(n):
    reach = math.floor(n ** 0.55)
    for m in range(-reach, reach + 1):
        assert abs(binom_approx_error(n, m)) <= 0.01


def test_binom_approx_handles_large_n():
    # 2^1600 is far outside float range
    assert abs(binom_approx_error(1600, 57)) < 0.01


def test_balance_prob_exact_examples():
    assert balance_prob_exact(0, 0, 2) == Fraction(2, 3)
    assert balance_prob_exact(2, 0, 2) == 0
    assert balance_prob_exact(0, 0, 50) == pytest.approx(balance_prob_asymptotic(0, 0, 50), rel=0.05)
    with pytest.raises(ParameterError):
        balance_prob_exact(0, 0, 3)
    with pytest.raises(ParameterError):
        balance_prob_exact(0, 5, 4)


@given(st.sampled_from([2, 4, 8, 12, 20]).flatmap(
    lambda k: st.tuples(st.integers(-k, k), st.integers(-k, k), st.just(k))))
def test_balance_prob_complement_symmetry(args):
    t, R, k = args
    assert balance_prob_exact(t, R, k) == balance_prob_exact(-t, -R, k)


def test_balance_prob_asymptotic_examples():
    assert balance_prob_asymptotic(0, 0, 2) == pytest.approx(math.sqrt(2 / math.pi))
    assert balance_prob_asymptotic(3, 6, 40) == pytest.approx(math.sqrt(4 / (40 * math.pi)))
    ratio = float(balance_prob_exact(2, 0, 100)) / balance_prob_asymptotic(2, 0, 100)
    assert 0.9 <= ratio <= 1.1


def test_counting_bound_examples():
    cb = counting_lower_bound(8, 2)
    assert cb.ratio == Fraction(70, 36)
    assert cb.value == pytest.approx(1.944, abs=1e-3)
    assert cb.ceiling == 2
    assert counting_lower_bound(4, 2).value == 1.5
    with pytest.raises(ParameterError):
        counting_lower_bound(10, 3)


@pytest.mark.parametrize("n,d", [(4, 2), (8, 2), (12, 3), (24, 3), (40, 5), (60, 10), (64, 16)])
def test_counting_bound_at_least_one_and_ceiling_exact(n, d):
    cb = counting_lower_bound(n, d)
    assert cb.value >= 1
    c = cb.ceiling
    assert Fraction(c) ** (d - 1) >= cb.ratio
    assert c == 1 or Fraction(c - 1) ** (d - 1) < cb.ratio


def test_degree_bound():
    assert degree_lower_bound(6) == 18
    assert degree_lower_bound(2) == 2
    n = 10_000
    # crossover sits between d = 8 and d = 10 at this n
    assert degree_lower_bound(8) < counting_lower_bound(n, 8).value
    assert degree_lower_bound(100) > counting_lower_bound(n, 100).value
