from itertools import combinations
from math import comb, sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgalvin.construct import (
    BuildConfig,
    build_galvin,
    build_single_family,
    bucket_layout_standard,
    copy_stream,
    interval_galvin,
)
from dgalvin.core import (
    BudgetExceeded,
    ErrorVector,
    GalvinFamily,
    GeneratorBank,
    ParameterError,
    PartitionWitness,
    SubsetMask,
    bucket_errors,
    full_mask,
    mask_of,
)
from dgalvin.verify import (
    brute_force_handle,
    check_degree_condition,
    check_witness,
    exhaustive_check,
    find_witness,
    greedy_order,
    greedy_pi,
    half_sets,
    max_prefix_error,
    monte_carlo_handle_prob,
    random_half_set,
    structured_handle,
    wilson_interval,
)


def naive_handles(a, fam):
    """Oracle: try every d-combination of members and their complements."""
    members = fam.all_masks()
    full = full_mask(fam.n)
    for combo in combinations(members, fam.d):
        union = 0
        ok = True
        for s in combo:
            if union & s:
                ok = False
                break
            union |= s
        if not ok or union != full:
            continue
        balances = sorted(2 * (a & s).bit_count() - s.bit_count() for s in combo)
        if all(b == 0 for b in balances[:-1]) and balances[-1] in ((0, 1) if fam.n % 2 else (0,)):
            return True
    return False


def toy_bank():
    layout = bucket_layout_standard(8, 2)
    return GeneratorBank(layout, ((0,), (mask_of([2, 3]),), (layout.masks[2],)), r=1)


def block_family():
    return GalvinFamily(8, 2, (mask_of(range(4)), mask_of(range(4, 8))))


def test_greedy_order_examples():
    assert greedy_order((1, 0, -1)) == (0, 1, 2)
    assert greedy_order((2, -3, 3, -2)) == (0, 1, 2, 3)
    assert greedy_order((1, 1, -1, 0, -1)) == (0, 2, 1, 3, 4)


def test_greedy_pi_requires_half_set():
    with pytest.raises(ParameterError):
        greedy_pi(ErrorVector((1, 0, 0), SubsetMask(8, 0b111)))


@settings(max_examples=300)
@given(st.sampled_from([(24, 3), (40, 5), (80, 10)]).flatmap(
    lambda nd: st.tuples(st.just(nd), st.randoms(use_true_random=False))))
def test_greedy_prefix_bound(args):
    (n, d), rnd = args
    layout = bucket_layout_standard(n, d)
    a = mask_of(rnd.sample(range(n), n // 2))
    values = bucket_errors(a, layout.masks, False)
    pi = greedy_order(values)
    assert sorted(pi) == list(range(d + 1)) and pi[0] == 0 and pi[-1] == d
    assert max_prefix_error(values, pi) <= max(abs(v) for v in values)


def test_structured_hand_example():
    w = structured_handle(mask_of([0, 1, 4, 5]), toy_bank())
    assert w is not None
    assert [sorted(s.elements()) for s in w.subsets()] == [[0, 1, 2, 3], [4, 5, 6, 7]]
    assert w.balances == (0, 0)
    assert structured_handle(mask_of([0, 2, 3, 6]), toy_bank()) is None


def test_brute_force_examples():
    fam = GalvinFamily(8, 2, (mask_of(range(4)), mask_of(range(4, 8)), mask_of([0, 1, 6, 7])))
    assert brute_force_handle(mask_of([0, 2, 3, 6]), fam) is None
    w = brute_force_handle(mask_of([0, 4, 2, 6]), fam)
    assert w is not None and check_witness(mask_of([0, 2, 4, 6]), fam, w)
    fam = interval_galvin(8)
    w = brute_force_handle(mask_of([0, 2, 4, 6]), fam)
    assert w is not None and check_witness(mask_of([0, 2, 4, 6]), fam, w)


def test_brute_force_budget():
    with pytest.raises(BudgetExceeded):
        brute_force_handle(mask_of([0, 2, 4, 6]), interval_galvin(8), budget=0)


@pytest.mark.parametrize("n,d,r", [(8, 2, 1), (8, 4, 1), (12, 3, 2), (12, 2, 2), (16, 4, 1)])
def test_brute_force_agrees_with_naive_oracle(n, d, r):
    rng = np.random.default_rng(n * d + r)
    for seed in range(4):
        fam = build_galvin(BuildConfig(n, d, r=r, copies=2, seed=seed))
        for _ in range(40):
            a = random_half_set(n, rng)
            assert (brute_force_handle(a, fam) is not None) == naive_handles(a, fam)


def test_naive_oracle_on_indivisible():
    fam = build_galvin(BuildConfig(11, 2, variant="indivisible", r=2, copies=2, seed=3))
    rng = np.random.default_rng(5)
    for _ in range(60):
        a = random_half_set(11, rng)
        w = brute_force_handle(a, fam)
        assert (w is not None) == naive_handles(a, fam)
        if w is not None:
            assert check_witness(a, fam, w)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(8, 2), (12, 3), (12, 2), (16, 4)]), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_witnesses_are_sound_and_complete(nd, r, seed):
    n, d = nd
    fam = build_single_family(BuildConfig(n, d, r=r, copies=1, seed=seed), copy_stream(seed, 0))
    rng = np.random.default_rng(seed)
    for _ in range(5):
        a = random_half_set(n, rng)
        ws = structured_handle(a, fam.sources[0].bank)
        wf = find_witness(a, fam)
        wb = brute_force_handle(a, fam)
        for w in (ws, wf, wb):
            assert w is None or check_witness(a, fam, w)
        if ws is not None:
            assert wb is not None
        assert (wf is None) == (wb is None)


def test_check_witness_rejects_bad_certificates():
    fam = interval_galvin(8)
    a = mask_of([0, 1, 4, 5])
    good = find_witness(a, fam)
    assert check_witness(a, fam, good)
    lo, hi = mask_of(range(4)), mask_of(range(4, 8))
    assert not check_witness(a, fam, PartitionWitness.of(8, a, [lo, lo]))
    assert not check_witness(a, fam, PartitionWitness.of(8, a, [lo]))
    assert not check_witness(a, fam, PartitionWitness.of(8, a, [mask_of([0, 1, 2]), mask_of(range(3, 8))]))
    assert not check_witness(a, fam, PartitionWitness(8, (lo, hi), (1, -1)))
    b = mask_of([0, 1, 2, 4])
    assert not check_witness(b, fam, PartitionWitness.of(8, b, [lo, hi]))
    assert not check_witness(mask_of([0, 1, 4]), fam, PartitionWitness.of(8, mask_of([0, 1, 4]), [lo, hi]))
    outside = GalvinFamily(8, 2, (lo,))
    assert not check_witness(a, outside, PartitionWitness.of(8, a, [lo, hi]))


def test_degree_condition():
    report = check_degree_condition(interval_galvin(8))
    assert report.ok and report.min_degree == 4
    assert report.histogram == {4: 8}
    starved = GalvinFamily(8, 4, (mask_of([0, 1]), mask_of([2, 3]), mask_of([4, 5]), mask_of([6, 7]), mask_of([0, 2])))
    report = check_degree_condition(starved)
    assert not report.ok and report.min_degree == 1


def test_half_sets_enumeration():
    sets = list(half_sets(10, 5))
    assert len(sets) == comb(10, 5)
    assert sets == sorted(sets)
    assert all(s.bit_count() == 5 for s in sets)
    assert list(half_sets(4, 0)) == [0]


@pytest.mark.parametrize("n", [8, 12])
def test_exhaustive_interval_success(n):
    report = exhaustive_check(interval_galvin(n))
    assert report.success and report.trials == comb(n, n // 2)
    assert report.witness is not None


def test_exhaustive_block_counterexample():
    report = exhaustive_check(block_family())
    assert not report.success
    assert report.counterexample.elements() == [0, 1, 2, 3]


def test_exhaustive_empty_family():
    report = exhaustive_check(GalvinFamily(8, 2, ()))
    assert not report.success and report.counterexample.bits == 0b1111


def test_exhaustive_thread_count_does_not_change_result():
    fam = build_galvin(BuildConfig(12, 3, r=2, copies=2, seed=0))
    one = exhaustive_check(fam, threads=1)
    four = exhaustive_check(fam, threads=4)
    assert one.success == four.success
    assert one.counterexample == four.counterexample


def test_exhaustive_limits():
    with pytest.raises(BudgetExceeded):
        exhaustive_check(interval_galvin(24))
    with pytest.raises(BudgetExceeded):
        exhaustive_check(block_family(), budget=0)


def test_monte_carlo_interval_family():
    report = monte_carlo_handle_prob(interval_galvin(12), 300, np.random.default_rng(0))
    assert report.success and report.p_hat == 1.0
    assert report.ci[0] > 0.98 and report.ci[1] == pytest.approx(1.0)


def test_monte_carlo_block_family_rate():
    trials = 4000
    report = monte_carlo_handle_prob(block_family(), trials, np.random.default_rng(1))
    p = 36 / 70
    assert abs(report.successes - trials * p) <= 3 * sqrt(trials * p * (1 - p))
    assert report.ci[0] < p < report.ci[1]
    assert report.counterexample is not None and not report.success


def test_monte_carlo_threads_agree():
    fam = build_galvin(BuildConfig(24, 3, r=3, copies=1, seed=2))
    a = monte_carlo_handle_prob(fam, 200, np.random.default_rng(9), threads=1)
    b = monte_carlo_handle_prob(fam, 200, np.random.default_rng(9), threads=3)
    assert a.successes == b.successes


def test_monte_carlo_needs_trials():
    with pytest.raises(ParameterError):
        monte_carlo_handle_prob(block_family(), 0, np.random.default_rng(0))


def test_wilson_interval_matches_formula():
    lo, hi = wilson_interval(30, 100)
    z = 1.959963984540054
    p, n = 0.3, 100
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert lo == pytest.approx(centre - half) and hi == pytest.approx(centre + half)


def test_indivisible_witness_sizes_follow_plan():
    fam = build_galvin(BuildConfig(29, 6, variant="indivisible", copies=8, seed=1))
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = random_half_set(29, rng)
        w = find_witness(a, fam)
        assert w is not None and check_witness(a, fam, w)
        assert sorted(s.bit_count() for s in w.sets) == [4, 4, 4, 5, 6, 6]
        assert w.balances[-1] == 1 and w.sets[-1].bit_count() == 5
