"""Coalition encoding, oracle bookkeeping, and size-conditioned sampling."""

import numpy as np
import pytest
from scipy import stats

from drshapley.core import (CachedOracle, ValueOracle, coalition_of,
                            coalition_size, contains, empty_coalition,
                            full_coalition, iter_members,
                            marginal_contribution, sample_coalition_of_size,
                            with_member, without_member)
from drshapley.rng import Stream


class Additive(ValueOracle):
    def __init__(self, weights):
        super().__init__(len(weights))
        self.w = list(weights)

    def evaluate(self, coalition):
        return float(sum(self.w[i] for i in iter_members(coalition)))


def test_coalition_helpers():
    assert empty_coalition() == 0
    assert full_coalition(3) == 0b111
    assert coalition_of([0, 2]) == 0b101
    assert coalition_of([]) == 0
    assert coalition_size(0b1011) == 3
    assert coalition_size(0) == 0
    assert contains(0b101, 2) and not contains(0b101, 1)
    assert with_member(0b001, 2) == 0b101
    assert with_member(0b101, 2) == 0b101
    assert without_member(0b101, 2) == 0b001
    assert without_member(0b001, 2) == 0b001


def test_iter_members_ascending():
    assert list(iter_members(0)) == []
    assert list(iter_members(0b10110)) == [1, 2, 4]
    mask = coalition_of([9, 0, 5])
    assert list(iter_members(mask)) == [0, 5, 9]


def test_oracle_counts_evaluations():
    g = Additive([1.0, 2.0, 4.0])
    assert g.eval_count == 0
    assert g.value(0b111) == 7.0
    assert g.value(0b001) == 1.0
    assert g.eval_count == 2
    g.tally(5)
    assert g.eval_count == 7


def test_oracle_validates_coalition():
    g = Additive([1.0, 2.0])
    with pytest.raises(ValueError):
        g.value(-1)
    with pytest.raises(ValueError):
        g.value(0b100)   # player 2 does not exist
    with pytest.raises(ValueError):
        Additive([])


def test_cached_oracle_counts_only_inner_evaluations():
    g = Additive([1.0, 2.0, 4.0])
    c = CachedOracle(g)
    for _ in range(5):
        assert c.value(0b011) == 3.0
    assert c.eval_count == 1          # hits are free
    assert c.hits == 4 and c.misses == 1
    assert c.value(0b111) == 7.0
    assert c.eval_count == 2


def test_cached_oracle_eviction_keeps_answers_right():
    g = Additive([1.0, 2.0, 4.0])
    c = CachedOracle(g, maxsize=2)
    vals = {m: c.value(m) for m in range(8)}
    assert vals == {m: g.evaluate(m) for m in range(8)}


def test_marginal_contribution():
    g = Additive([1.0, 2.0, 4.0])
    assert marginal_contribution(g, 2, 0b011) == 4.0
    assert marginal_contribution(g, 0, 0) == 1.0
    with pytest.raises(ValueError):
        marginal_contribution(g, 1, 0b010)   # already a member
    with pytest.raises(ValueError):
        marginal_contribution(g, 5, 0)


def test_sample_coalition_of_size_contract():
    st = Stream(11)
    for j in range(5):
        mask = sample_coalition_of_size(6, 2, j, st)
        assert coalition_size(mask) == j
        assert not contains(mask, 2)
    with pytest.raises(ValueError):
        sample_coalition_of_size(6, 2, 6, st)   # only 5 others exist
    with pytest.raises(ValueError):
        sample_coalition_of_size(6, 7, 1, st)
    with pytest.raises(ValueError):
        sample_coalition_of_size(6, 2, -1, st)


def test_sample_coalition_size_zero_consumes_nothing():
    st = Stream(4)
    s0 = st.state
    assert sample_coalition_of_size(5, 0, 0, st) == 0
    assert st.state == s0
    sample_coalition_of_size(5, 0, 2, st)
    assert st.state != s0


def test_sample_coalition_uniform_over_subsets():
    # n=5, i=0, j=2: all C(4,2)=6 subsets of {1,2,3,4} equally likely
    st = Stream(321)
    counts = {}
    draws = 60000
    for _ in range(draws):
        mask = sample_coalition_of_size(5, 0, 2, st)
        counts[mask] = counts.get(mask, 0) + 1
    assert len(counts) == 6
    expected = draws / 6
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < stats.chi2.ppf(0.99, 5)


def test_abstract_oracle_requires_evaluate():
    with pytest.raises(NotImplementedError):
        ValueOracle(2).evaluate(0)
