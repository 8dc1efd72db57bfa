"""Exhaustive Shapley computation against independently derived values."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from drshapley.core import ValueOracle, coalition_size, iter_members
from drshapley.exact import (SizeCapError, exact_strata_moments,
                             shapley_exact_permutations,
                             shapley_exact_subsets, subset_weights,
                             value_table)
from drshapley.games import ReserveGame, generate_reserve_game
from drshapley.rng import Stream


class PyOracle(ValueOracle):
    def __init__(self, n, fn):
        super().__init__(n)
        self.fn = fn

    def evaluate(self, coalition):
        return float(self.fn(coalition))


def fraction_shapley(n, fn):
    """Brute-force permutation definition in exact rational arithmetic."""
    phi = [Fraction(0)] * n
    total = 0
    for perm in itertools.permutations(range(n)):
        total += 1
        mask = 0
        prev = Fraction(fn(0))
        for p in perm:
            mask |= 1 << p
            v = Fraction(fn(mask))
            phi[p] += v - prev
            prev = v
    return [p / total for p in phi]


def test_subset_weights_match_exact_fractions():
    for n in range(1, 13):
        w = subset_weights(n)
        assert w.shape == (n,)
        for j in range(n):
            exact = Fraction(math.factorial(j) * math.factorial(n - 1 - j),
                             math.factorial(n))
            # log-space computation rounds at each step: ulp-level slack
            assert abs(w[j] - float(exact)) <= 5e-15 * float(exact)
        # weights times subset counts partition the orderings
        total = sum(w[j] * math.comb(n - 1, j) for j in range(n))
        assert abs(total - 1.0) < 1e-12


def test_majority_game_symmetric_split():
    g = PyOracle(3, lambda m: 1.0 if coalition_size(m) >= 2 else 0.0)
    res = shapley_exact_subsets(g)
    assert np.allclose(res.phi, [1 / 3] * 3, atol=1e-12)
    assert res.evals == 8


def test_two_player_unanimity():
    g = PyOracle(2, lambda m: 1.0 if m == 0b11 else 0.0)
    res = shapley_exact_subsets(g)
    assert np.allclose(res.phi, [0.5, 0.5], atol=1e-15)


def test_additive_game_gets_weights_back():
    w = [3.0, -1.0, 0.5, 2.25, 0.0, 7.5, 1.0, -2.0, 4.0]
    g = PyOracle(len(w), lambda m: sum(w[i] for i in iter_members(m)))
    res = shapley_exact_subsets(g)
    assert np.allclose(res.phi, w, atol=1e-12)


def test_symmetric_reserve_game():
    g = ReserveGame(np.array([1.0, 1.0, 1.0]), 1.5)
    res = shapley_exact_subsets(g)
    assert np.allclose(res.phi, [-0.5] * 3, atol=1e-12)


def test_matches_rational_brute_force():
    st = Stream(17)

    def fn(mask):
        # deterministic pseudo-random value per coalition
        return ((mask * 2654435761) % 1000) / 250.0 - 2.0

    g = PyOracle(5, fn)
    res = shapley_exact_subsets(g)
    expect = fraction_shapley(5, fn)
    for a, b in zip(res.phi, expect):
        assert abs(a - float(b)) < 1e-12


def test_subset_and_permutation_forms_agree():
    for k in range(15):
        n = 3 + k % 6
        g = generate_reserve_game(n, seed=500 + k)
        a = shapley_exact_subsets(g)
        b = shapley_exact_permutations(g)
        assert np.max(np.abs(a.phi - b.phi)) < 1e-12
        assert b.method == "permutations"


def test_efficiency_of_exact_values():
    for k in range(10):
        g = generate_reserve_game(7, seed=900 + k)
        res = shapley_exact_subsets(g)
        assert abs(res.phi.sum() - g.value((1 << 7) - 1)) < 1e-9


def test_size_caps():
    class Big(ValueOracle):
        def evaluate(self, coalition):
            return 0.0

    with pytest.raises(SizeCapError):
        shapley_exact_subsets(Big(25))
    with pytest.raises(SizeCapError):
        shapley_exact_permutations(Big(11))
    with pytest.raises(SizeCapError):
        value_table(Big(25))
    # the failure message should point at the sampling path
    try:
        shapley_exact_subsets(Big(25))
    except SizeCapError as e:
        assert "estimat" in str(e).lower()


def test_value_table_matches_direct_evaluation():
    g = generate_reserve_game(4, seed=3)
    table = value_table(g)
    for mask in range(16):
        assert table[mask] == g.evaluate(mask)

    from drshapley.games import generate_load_follow_game
    lf = generate_load_follow_game(4, seed=3)
    table = value_table(lf)
    for mask in range(16):
        assert table[mask] == lf.evaluate(mask)

    w = [1.0, 2.0, 4.0]
    py = PyOracle(3, lambda m: sum(w[i] for i in iter_members(m)))
    table = value_table(py)
    assert list(table) == [py.evaluate(m) for m in range(8)]


def test_strata_moments_against_enumeration():
    g = generate_reserve_game(5, seed=77)
    counts, means, m2 = exact_strata_moments(g)
    n = 5
    for i in range(n):
        others = [p for p in range(n) if p != i]
        for j in range(n):
            vals = []
            for combo in itertools.combinations(others, j):
                mask = 0
                for p in combo:
                    mask |= 1 << p
                vals.append(g.evaluate(mask | (1 << i)) - g.evaluate(mask))
            assert counts[i, j] == len(vals)
            assert abs(means[i, j] - np.mean(vals)) < 1e-12
            # population variance over the stratum
            assert abs(m2[i, j] / counts[i, j] - np.var(vals)) < 1e-12


def test_strata_means_average_to_shapley():
    g = generate_reserve_game(6, seed=8)
    counts, means, m2 = exact_strata_moments(g)
    res = shapley_exact_subsets(g)
    assert np.allclose(means.mean(axis=1), res.phi, atol=1e-12)
