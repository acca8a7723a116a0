import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from antisym.symmetry import (
    Permutation,
    apply_perm,
    as_cloud,
    compose,
    dist_parity_dp,
    dist_plus_batch,
    dist_plus_bruteforce,
    dist_sym_1d,
    dist_sym_bruteforce,
    enumerate_group,
    l1_norm_diff,
    perm_sign,
    table_signs,
)

from conftest import inversion_sign


def naive_dist(x, y, even_only):
    # plain loop over itertools, used as an oracle for the vectorised paths
    x, y = np.asarray(x, float).reshape(len(x), -1), np.asarray(y, float).reshape(len(y), -1)
    best = np.inf
    for p in itertools.permutations(range(len(x))):
        if even_only and inversion_sign(p) < 0:
            continue
        best = min(best, float(np.abs(x - y[list(p)]).sum()))
    return best


def random_perm(rng, n):
    return Permutation.from_mapping(rng.permutation(n))


# ---- perm_sign ---------------------------------------------------------------

@pytest.mark.parametrize("mapping, sign", [((0, 1, 2), 1), ((1, 0, 2), -1), ((1, 2, 0), 1)])
def test_perm_sign_examples(mapping, sign):
    assert perm_sign(mapping) == sign


@pytest.mark.parametrize("bad", [(0, 0, 2), (0, 1, 3), (-1, 0, 1)])
def test_perm_sign_rejects_non_bijection(bad):
    with pytest.raises(ValueError):
        perm_sign(bad)


def test_perm_sign_matches_pair_scan(rng):
    for n in [1, 2, 5, 17, 64]:
        for _ in range(20):
            m = tuple(rng.permutation(n))
            assert perm_sign(m) == inversion_sign(m)


def test_table_signs_matches_perm_sign(rng):
    table = np.array([rng.permutation(9) for _ in range(200)])
    assert list(table_signs(table)) == [perm_sign(r) for r in table]


def test_sign_is_multiplicative(rng):
    for _ in range(200):
        n = int(rng.integers(1, 12))
        s, t = random_perm(rng, n), random_perm(rng, n)
        c = compose(s, t)
        assert c.sign == perm_sign(c.mapping) == s.sign * t.sign


def test_permutation_helpers():
    t = Permutation.transposition(4, 1, 3)
    assert t.mapping == (0, 3, 2, 1) and t.sign == -1
    assert Permutation.identity(3).sign == 1
    c = Permutation.from_mapping((2, 0, 1))
    assert compose(c, c.inverse()) == Permutation.identity(3)
    assert np.array_equal(np.asarray(c), [2, 0, 1])


# ---- apply_perm / compose ----------------------------------------------------

def test_apply_perm_examples():
    x = np.array([[1.0], [2.0], [3.0]])
    assert apply_perm(x, (2, 0, 1)).ravel().tolist() == [3.0, 1.0, 2.0]
    assert np.array_equal(apply_perm(x, Permutation.identity(3)), x)
    y = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert apply_perm(y, (1, 0)).tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_apply_perm_size_mismatch():
    with pytest.raises(ValueError):
        apply_perm(np.zeros((3, 2)), (1, 0))


def test_composition_convention(rng):
    for _ in range(100):
        n = int(rng.integers(1, 8))
        x = rng.standard_normal((n, 3))
        s, t = random_perm(rng, n), random_perm(rng, n)
        assert np.array_equal(apply_perm(apply_perm(x, t), s), apply_perm(x, compose(s, t)))


def test_apply_perm_batched(rng):
    x = rng.standard_normal((5, 4, 2))
    p = (3, 1, 0, 2)
    assert np.array_equal(apply_perm(x, p), np.stack([apply_perm(xi, p) for xi in x]))


def test_as_cloud_validation():
    assert as_cloud([1.0, 2.0]).shape == (2, 1)
    with pytest.raises(ValueError):
        as_cloud([[np.nan, 0.0]])
    with pytest.raises(ValueError):
        as_cloud(np.zeros((2, 2, 2)))


# ---- metrics -----------------------------------------------------------------

def test_l1_examples():
    x = np.array([[0.5, 1.0], [2.0, -1.0]])
    assert l1_norm_diff(x, x) == 0.0
    assert l1_norm_diff([[0.0], [0.0]], [[1.0], [-1.0]]) == 2.0
    assert l1_norm_diff([[1.0, 2.0]], [[4.0, 6.0]]) == 7.0
    with pytest.raises(ValueError):
        l1_norm_diff(np.zeros((2, 1)), np.zeros((3, 1)))


def test_l1_is_correctly_rounded():
    # naive summation loses the small terms entirely
    x = np.array([1e16, 1.0, 1.0, 1.0, -1e16])
    y = np.zeros(5)
    assert l1_norm_diff(x, y) == 2e16 + 4.0


def test_dist_plus_examples():
    assert dist_plus_bruteforce([[0.0], [1.0]], [[1.0], [0.0]]) == 2.0
    y = np.array([[0.3, 1.0], [2.0, -1.0], [5.0, 0.0]])
    for sigma in enumerate_group(3, even_only=True):
        assert dist_plus_bruteforce(apply_perm(y, sigma), y) == 0.0
    assert dist_plus_bruteforce([[0.0], [1.0], [2.0]], [[2.0], [0.0], [1.0]]) == 0.0


def test_dist_sym_examples():
    assert dist_sym_bruteforce([[0.0], [1.0]], [[1.0], [0.0]]) == 0.0
    assert dist_sym_bruteforce([[0.0], [3.0]], [[1.0], [1.0]]) == 3.0
    assert dist_sym_1d([3.0, 1.0], [1.0, 3.0]) == 0.0
    assert dist_sym_1d([0.0, 3.0], [1.0, 1.0]) == 3.0
    assert dist_sym_1d([5.0], [7.0]) == 2.0
    with pytest.raises(ValueError):
        dist_sym_1d([1.0, 2.0], [1.0])


def test_enumeration_guard():
    with pytest.raises(ValueError):
        dist_plus_bruteforce(np.zeros((10, 1)), np.zeros((10, 1)))
    with pytest.raises(ValueError):
        next(enumerate_group(10))


@pytest.mark.parametrize("n, even, count", [(3, True, 3), (3, False, 6), (1, False, 1), (5, True, 60)])
def test_enumerate_group_counts(n, even, count):
    perms = list(enumerate_group(n, even_only=even))
    assert len(perms) == count
    assert len({p.mapping for p in perms}) == count
    assert all(p.sign == inversion_sign(p.mapping) for p in perms)
    if even:
        assert all(p.sign == 1 for p in perms)


def test_bruteforce_matches_naive_loop(rng):
    for _ in range(60):
        n, d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        x, y = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        assert dist_plus_bruteforce(x, y) == pytest.approx(naive_dist(x, y, True), rel=1e-14, abs=0)
        assert dist_sym_bruteforce(x, y) == pytest.approx(naive_dist(x, y, False), rel=1e-14, abs=0)


def test_metric_properties(rng):
    for _ in range(100):
        n, d = int(rng.integers(2, 6)), int(rng.integers(1, 3))
        x, y, z = (rng.standard_normal((n, d)) for _ in range(3))
        dp, ds = dist_plus_bruteforce(x, y), dist_sym_bruteforce(x, y)
        assert dp == dist_plus_bruteforce(y, x)
        assert ds == dist_sym_bruteforce(y, x)
        assert ds <= dp
        assert dp <= dist_plus_bruteforce(x, z) + dist_plus_bruteforce(z, y) + 1e-12
        assert ds <= dist_sym_bruteforce(x, z) + dist_sym_bruteforce(z, y) + 1e-12
        s = random_perm(rng, n)
        assert dist_sym_bruteforce(x, apply_perm(y, s)) == ds
        if s.sign > 0:
            assert dist_plus_bruteforce(x, apply_perm(y, s)) == dp


def test_dist_sym_1d_equals_bruteforce(rng):
    for _ in range(500):
        n = int(rng.integers(1, 8))
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        if rng.random() < 0.3:
            y[: n // 2] = x[: n // 2]
        assert dist_sym_1d(x, y) == dist_sym_bruteforce(x[:, None], y[:, None])


def test_fast_paths_match_bruteforce(rng):
    for n in range(1, 8):
        x = rng.standard_normal((40, n, 1))
        y = rng.standard_normal((40, n, 1))
        y[:10] = x[:10, rng.permutation(n)]
        dp, ds = dist_parity_dp(x, y)
        batch = dist_plus_batch(x, y)
        for i in range(40):
            ref_p = dist_plus_bruteforce(x[i], y[i])
            ref_s = dist_sym_bruteforce(x[i], y[i])
            assert dp[i] == pytest.approx(ref_p, rel=1e-13, abs=1e-15)
            assert batch[i] == pytest.approx(ref_p, rel=1e-13, abs=1e-15)
            assert ds[i] == pytest.approx(ref_s, rel=1e-13, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=2, max_size=6).flatmap(
    lambda xs: st.tuples(st.just(xs), st.permutations(list(range(len(xs)))))))
def test_integer_clouds_orbit_zero(case):
    # with repeated values an odd relabelling can still lie in the A_n orbit
    xs, p = case
    x = np.array(xs, float)[:, None]
    y = apply_perm(x, p)
    assert dist_sym_bruteforce(x, y) == 0.0
    expect_zero = perm_sign(p) > 0 or len(set(xs)) < len(xs)
    assert (dist_plus_bruteforce(x, y) == 0.0) == expect_zero
