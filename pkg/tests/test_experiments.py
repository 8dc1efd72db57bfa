"""Repeated-run drivers: curves, the MSPE table, and the benefit check."""

import numpy as np
import pytest

from drshapley.estimator import StrataProfile, benefit_ratio
from drshapley.experiments import (benefit_report, empirical_variance, mspe,
                                   mspe_table, regret_curve,
                                   repeated_estimates, variance_curve)
from drshapley.games import ReserveGame, generate_reserve_game
from drshapley.policies import make_policy


def test_mspe_frozen_examples():
    assert mspe(np.array([[2.0, 3.0]]), np.array([2.0, 3.0])) == 0.0
    assert mspe(np.array([[1.0], [3.0]]), np.array([2.0])) == 1.0
    assert mspe(np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([1.0, 1.0])) == 1.0


def test_mspe_validation():
    with pytest.raises(ValueError):
        mspe(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        mspe(np.zeros(3), np.zeros(3))


def test_empirical_variance():
    T = np.array([[1.0, 0.0], [3.0, 0.0]])
    # per-player variances 2.0 and 0.0, averaged
    assert empirical_variance(T) == 1.0
    with pytest.raises(ValueError):
        empirical_variance(T[:1])


def test_repeated_estimates_shapes_and_determinism():
    g = generate_reserve_game(5, seed=3)
    pol = make_policy("equal")
    a = repeated_estimates(g, pol, 100, reps=4, seed=9)
    assert a.T.shape == (4, 5) and a.phi_hat.shape == (4, 5)
    b = repeated_estimates(g, pol, 100, reps=4, seed=9, threads=3)
    assert np.array_equal(a.T, b.T)
    assert np.array_equal(a.phi_hat, b.phi_hat)
    # distinct repetitions use distinct streams
    assert not np.array_equal(a.T[0], a.T[1])


def test_variance_curve_matches_analytic_and_scales():
    g = generate_reserve_game(10, seed=21)
    rows = variance_curve(g, ["equal", "random"], [400, 800], reps=300,
                          seed=5, threads=8)
    by = {(r.policy, r.N): r for r in rows}
    for key, r in by.items():
        assert r.empirical_var == pytest.approx(r.analytic_var, rel=0.25)
        assert r.empirical_var >= 0 and np.isfinite(r.analytic_var)
    # analytic curves scale as 1/N
    for pol in ("equal", "random"):
        assert by[(pol, 800)].analytic_var == \
            pytest.approx(by[(pol, 400)].analytic_var / 2, rel=1e-12)
    # unstratified sampling is never better in this game
    assert by[("random", 400)].analytic_var > by[("equal", 400)].analytic_var


def test_variance_curve_validation():
    g = generate_reserve_game(4, seed=1)
    with pytest.raises(ValueError):
        variance_curve(g, [], [100], reps=10, seed=1)
    with pytest.raises(ValueError):
        variance_curve(g, ["equal"], [100], reps=1, seed=1)
    with pytest.raises(ValueError):
        variance_curve(g, ["equal"], [], reps=10, seed=1)
    with pytest.raises(ValueError):
        variance_curve(g, ["mystery"], [100], reps=10, seed=1)


def test_regret_curve_baseline_is_zero():
    g = generate_reserve_game(8, seed=11)
    rows = regret_curve(g, ["neyman", "equal"], [200, 400], reps=40, seed=3,
                        threads=8)
    for r in rows:
        if r.schedule == "neyman":
            assert r.regret == 0.0
        else:
            assert np.isfinite(r.regret)


def test_mspe_table_contract():
    g = generate_reserve_game(8, seed=11)
    rep = mspe_table(g, ["equal", "random"], N=400, reps=30, seed=3, threads=8)
    assert rep.normalized["neyman"] == 1.0     # baseline always included
    assert set(rep.policies) == {"equal", "random", "neyman"}
    for name in rep.policies:
        assert rep.mspe[name] >= 0.0
        assert rep.per_player[name].shape == (8,)
    assert np.allclose(
        [rep.per_player[n].mean() for n in rep.policies],
        [rep.mspe[n] for n in rep.policies], rtol=1e-12)
    # a single repetition still yields a well-formed table
    one = mspe_table(g, ["equal"], N=400, reps=1, seed=3)
    assert one.reps == 1 and np.isfinite(one.mspe["equal"])


def test_benefit_report_flags_null_players():
    # one player can never affect the penalty: no variance anywhere
    dx = np.array([0.0, 1.0, 1.0, 1.0, 1.0])
    g = ReserveGame(dx, 2.0)
    rep = benefit_report(g, seed=2)
    assert rep.skipped == (0,)
    assert np.isnan(rep.ratios[0])
    assert np.all(np.isfinite(rep.ratios[1:]))
    assert rep.median_ratio >= 1.0
    assert rep.recommendation in ("equal sampling adequate",
                                  "sigma-proportional sampling recommended")


def test_benefit_ratio_constant_profile_is_one():
    p = StrataProfile(np.zeros(4), np.full(4, 2.5))
    assert benefit_ratio(p) == pytest.approx(1.0, abs=1e-12)
