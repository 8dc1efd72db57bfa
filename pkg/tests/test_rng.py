"""Deterministic stream behavior and the generator's output quality."""

import numpy as np
import pytest
from scipy import stats

from drshapley.rng import Stream, derive

# first outputs of the 64-bit counter generator for two seeds, computed
# from its published constants with plain python integer arithmetic
SEED0_FIRST4 = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
                0x06C45D188009454F, 0xF88BB8A8724C81EC]
SEED12345_FIRST3 = [0x22118258A9D111A0, 0x346EDCE5F713F8ED,
                    0x1E9A57BC80E6721D]


def test_known_answer_seed0():
    st = Stream(0)
    assert [st.u64() for _ in range(4)] == SEED0_FIRST4


def test_known_answer_seed12345():
    st = Stream(12345)
    assert [st.u64() for _ in range(3)] == SEED12345_FIRST3


def test_reference_reimplementation_agrees():
    # independent pure-int model of the generator
    M = (1 << 64) - 1

    def ref(seed, k):
        s = seed
        out = []
        for _ in range(k):
            s = (s + 0x9E3779B97F4A7C15) & M
            z = s
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
            out.append(z ^ (z >> 31))
        return out

    for seed in (0, 1, 7, 2 ** 61 + 3):
        st = Stream(seed)
        assert [st.u64() for _ in range(20)] == ref(seed, 20)


def test_double_unit_interval_and_value():
    st = Stream(0)
    d = st.double()
    assert d == (SEED0_FIRST4[0] >> 11) * 2.0 ** -53
    st = Stream(3)
    for _ in range(2000):
        u = st.double()
        assert 0.0 <= u < 1.0


def test_determinism_and_state_roundtrip():
    a, b = Stream(99), Stream(99)
    assert [a.u64() for _ in range(50)] == [b.u64() for _ in range(50)]
    mid = a.state
    tail = [a.u64() for _ in range(10)]
    b.set_state(mid)
    assert [b.u64() for _ in range(10)] == tail


def test_below_bounds_and_validation():
    st = Stream(5)
    for m in (1, 2, 3, 17, 1000):
        for _ in range(200):
            r = st.below(m)
            assert 0 <= r < m
    assert Stream(1).below(1) == 0
    with pytest.raises(ValueError):
        st.below(0)
    with pytest.raises(ValueError):
        st.below(-3)


def test_below_uniformity():
    st = Stream(2024)
    m, draws = 7, 70000
    counts = np.bincount([st.below(m) for _ in range(draws)], minlength=m)
    expected = draws / m
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < stats.chi2.ppf(0.999, m - 1)


def test_derive_separates_streams():
    base = 42
    s1, s2 = derive(base, 1), derive(base, 2)
    assert s1 != s2
    assert derive(base, 1) == s1
    assert derive(base, 1, 2) != derive(base, 2, 1)
    assert derive(base, 1, 2) != derive(base, 1)
    # derived streams should not share obvious output structure
    a = [Stream(s1).u64() for _ in range(8)]
    b = [Stream(s2).u64() for _ in range(8)]
    assert a != b


def test_child_stream():
    st = Stream(7)
    assert st.child(3).state == derive(st.state, 3)
    assert st.child(3, 4).state == derive(st.state, 3, 4)


def test_seed_masked_to_64_bits():
    assert Stream(2 ** 64 + 5).state == Stream(5).state
    assert derive(2 ** 64 + 5, 1) == derive(5, 1)
