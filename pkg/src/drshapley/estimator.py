"""The stratified sampling statistic, its online accumulators, analytic
variance formulas, and the budget-balanced correction.

For player i the marginal-contribution population splits into n strata
by coalition size j.  The statistic is

    T_i = (1/n) * sum_j mean-of-stratum-j,

an equally weighted average of the per-stratum sample means, never a
pooled mean over raw draws: pooling would re-introduce exactly the
between-strata variance that stratification removes.  The one deliberate
exception is the `random` baseline policy, whose whole point is to show
that unstratified behavior, so its draws are pooled.

The reported var_T follows the online estimator's own convention,
(1/n^2) * sum_j sigma_hat_j^2 over the per-stratum sample variances; it
is the weighting used by the budget-balancing correction.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import ValueOracle, full_coalition
from .exact import exact_strata_moments
from .games import LoadFollowGame, ReserveGame
from .policies import AllocationPolicy, EqualPolicy, PolicyState
from .rng import STREAM_ESTIMATE, STREAM_PILOT, Stream, derive


# ---------------------------------------------------------------------------
# online per-stratum statistics

@dataclass(frozen=True)
class StratumStats:
    """Count / mean / sum-of-squared-deviations for one (player, stratum)."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return max(self.m2, 0.0) / (self.count - 1)

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.variance)


def welford_update(stats: StratumStats, x: float) -> StratumStats:
    """One-pass mean/variance update; returns the new StratumStats."""
    if math.isnan(x):
        raise ValueError("NaN sample rejected")
    c = stats.count + 1
    d = x - stats.mean
    mean = stats.mean + d / c
    m2 = stats.m2 + d * (x - mean)
    return StratumStats(c, mean, m2)


# ---------------------------------------------------------------------------
# strata profiles (exact or pilot-estimated per-stratum moments)

@dataclass(frozen=True)
class StrataProfile:
    """Per-stratum means and standard deviations for one player."""
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, np.float64)
        sigma = np.asarray(self.sigma, np.float64)
        if mu.shape != sigma.shape or mu.ndim != 1 or mu.size == 0:
            raise ValueError("mu and sigma must be equal-length vectors")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be finite and >= 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def exhaustive_strata_profiles(oracle: ValueOracle, cap: int = 24):
    """Exact population per-stratum moments for every player (n <= cap)."""
    counts, means, m2 = exact_strata_moments(oracle, cap)
    out = []
    for i in range(oracle.n_players):
        var = m2[i] / counts[i]          # population variance, counts >= 1
        out.append(StrataProfile(means[i].copy(), np.sqrt(np.maximum(var, 0.0))))
    return out


def pilot_strata_profiles(oracle: ValueOracle, budget: int, seed: int,
                          threads: int = None):
    """Per-stratum moments estimated with an equal-allocation pilot of
    `budget` samples per player (needs budget >= 2n so every stratum
    gets a sigma estimate)."""
    n = oracle.n_players
    if budget < 2 * n:
        raise ValueError(f"pilot budget {budget} < 2 per stratum (n={n})")
    policy = EqualPolicy()

    def run(i):
        stream = Stream(derive(seed, STREAM_PILOT, i))
        est = stratified_estimate(oracle, i, policy, budget, stream)
        return StrataProfile(est.means.copy(), est.sigma_hat.copy())

    return _player_map(run, n, threads)


def sigma_matrix_from_profiles(profiles) -> np.ndarray:
    return np.stack([p.sigma for p in profiles])


def neyman_sigma_matrix(oracle: ValueOracle, seed: int,
                        exhaustive_cap: int = 12,
                        pilot_budget: int = 10 ** 6,
                        threads: int = None) -> np.ndarray:
    """Per-player sigma rows for the oracle policy: exact when the game
    is small enough to enumerate, a large equal pilot otherwise."""
    if oracle.n_players <= exhaustive_cap:
        profiles = exhaustive_strata_profiles(oracle, exhaustive_cap)
    else:
        profiles = pilot_strata_profiles(oracle, pilot_budget, seed, threads)
    return sigma_matrix_from_profiles(profiles)


# ---------------------------------------------------------------------------
# analytic variances for the three allocation regimes

def _profile_sigma(profile: StrataProfile) -> np.ndarray:
    if isinstance(profile, StrataProfile):
        return profile.sigma
    return np.asarray(profile, np.float64)


def analytic_var_sd(profile, N: int) -> float:
    """Estimator variance under sigma-proportional (Neyman) allocation:
    mean(sigma)^2 / N."""
    if N <= 0:
        raise ValueError(f"N must be > 0, got {N}")
    sigma = _profile_sigma(profile)
    return float(np.mean(sigma)) ** 2 / N


def analytic_var_es(profile, N: int) -> float:
    """Estimator variance under equal allocation: mean(sigma^2) / N."""
    if N <= 0:
        raise ValueError(f"N must be > 0, got {N}")
    sigma = _profile_sigma(profile)
    return float(np.mean(sigma ** 2)) / N


def analytic_var_rs(profile: StrataProfile, N: int) -> float:
    """Estimator variance without stratification:
    [mean(sigma^2) + var(mu)] / N, var(mu) the population variance over
    the n stratum means (law of total variance)."""
    if N <= 0:
        raise ValueError(f"N must be > 0, got {N}")
    if not isinstance(profile, StrataProfile):
        raise TypeError("analytic_var_rs needs a full StrataProfile "
                        "(the mu vector enters the formula)")
    return float(np.mean(profile.sigma ** 2) + np.var(profile.mu)) / N


def benefit_ratio(profile) -> float:
    """How much equal allocation loses to sigma-proportional allocation:
    var_ES / var_SD = 1 + var(sigma)/mean(sigma)^2 (N cancels).  1 means
    nothing to gain; the threshold used by the CLI is 1.2."""
    sigma = _profile_sigma(profile)
    m = float(np.mean(sigma))
    if m <= 0:
        raise ValueError("all-zero sigma: ratio undefined (the estimator "
                         "has zero variance under any allocation)")
    return float(np.mean(sigma ** 2)) / (m * m)


# ---------------------------------------------------------------------------
# budget-balanced correction

def mle_budget_balance(T, var_T, budget: float) -> np.ndarray:
    """Shift the raw statistics so the payouts sum exactly to budget.

    Under a Gaussian model for each T_i, maximizing joint likelihood
    subject to sum(phi) = budget splits the discrepancy sum(T) - budget
    across players in proportion to their variances.  With every
    variance zero the weighting degenerates and the discrepancy is split
    uniformly, preserving symmetry.
    """
    T = np.asarray(T, np.float64)
    v = np.asarray(var_T, np.float64)
    if T.shape != v.shape or T.ndim != 1 or T.size == 0:
        raise ValueError("T and var_T must be equal-length vectors")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("var_T must be finite and >= 0")
    if not np.all(np.isfinite(T)):
        raise ValueError("T must be finite")
    n = T.size
    v_hat = 0.0
    tot = 0.0
    for i in range(n):
        v_hat += T[i]
        tot += v[i]
    gap = v_hat - budget
    if tot > 0.0:
        return T - (v / tot) * gap
    return T - gap / n


# ---------------------------------------------------------------------------
# per-player sampling runs

@dataclass(frozen=True)
class PlayerEstimate:
    """One player's sampling run: the statistic, its variance weight,
    and the per-stratum accumulators behind them."""
    player: int
    T: float
    var_T: float
    counts: np.ndarray
    means: np.ndarray
    m2: np.ndarray
    sigma_hat: np.ndarray
    pooled: bool

    @property
    def strata(self):
        return tuple(StratumStats(int(c), float(m), float(q))
                     for c, m, q in zip(self.counts, self.means, self.m2))


def _stratified_T_var(counts, means, m2):
    # fixed ascending reduction; the fused and generic paths both end
    # here so their outputs stay bit-identical
    n = counts.shape[0]
    tm = 0.0
    tv = 0.0
    for j in range(n):
        tm += means[j]
        c = counts[j]
        if c > 1:
            s2 = m2[j] / (c - 1)
            if s2 < 0.0:
                s2 = 0.0
            tv += s2
    return tm / n, tv / (n * n)


def _pooled_T_var(counts, means, m2):
    # recombine the per-stratum accumulators into plain unstratified
    # moments (the draws were an i.i.d. mixture; this is exact, not an
    # approximation)
    n = counts.shape[0]
    total = 0
    for j in range(n):
        total += counts[j]
    if total == 0:
        return 0.0, 0.0
    pm = 0.0
    for j in range(n):
        pm += counts[j] * means[j]
    pm /= total
    pq = 0.0
    for j in range(n):
        d = means[j] - pm
        pq += m2[j] + counts[j] * d * d
    if total > 1:
        s2 = pq / (total - 1)
        if s2 < 0.0:
            s2 = 0.0
    else:
        s2 = 0.0
    # same N/n scale convention as the stratified var_T so the ML
    # correction weights are comparable across policies
    return pm, s2 / n


def stratified_estimate(oracle: ValueOracle, i: int, policy: AllocationPolicy,
                        N: int, stream, force_generic: bool = False) -> PlayerEstimate:
    """Draw N marginal-contribution samples for player i under the
    policy's stratum choices and return the per-player estimate.

    stream may be a Stream or a bare integer seed state.  Built-in games
    run inside a fused kernel; any other oracle goes through the generic
    path (same RNG calls, same update arithmetic, so the two agree
    bit-for-bit on the built-ins).
    """
    n = oracle.n_players
    if not 0 <= i < n:
        raise ValueError(f"player {i} out of range")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if isinstance(stream, (int, np.integer)):
        stream = Stream(int(stream))
    probs = policy.fixed_probs(i, n)   # validates dimension for neyman
    eps = policy.eps_array(N)
    counts = np.zeros(n, np.int64)
    means = np.zeros(n, np.float64)
    m2 = np.zeros(n, np.float64)
    sigma_hat = np.zeros(n, np.float64)

    K = _backend.active()
    if not force_generic and isinstance(oracle, ReserveGame):
        with _backend.errstate():
            s = K.reserve_stratified_run(
                oracle.delta_x, oracle.delta_m, oracle.q, i, N, policy.code,
                eps, probs, policy.warm_rounds, np.uint64(stream.state),
                counts, means, m2, sigma_hat)
        stream.set_state(int(s))
        oracle.tally(2 * N)
    elif not force_generic and isinstance(oracle, LoadFollowGame):
        with _backend.errstate():
            s = K.loadfollow_stratified_run(
                oracle.demands, oracle.max_delays, oracle.target, i, N,
                policy.code, eps, probs, policy.warm_rounds,
                np.uint64(stream.state), counts, means, m2, sigma_hat)
        stream.set_state(int(s))
        oracle.tally(2 * N)
    else:
        state = PolicyState(policy, n, N, player=i)
        state.sigma_hat = sigma_hat
        cands = np.empty(n - 1, np.int64) if n > 1 else np.empty(0, np.int64)
        idx = 0
        for p in range(n):
            if p != i:
                cands[idx] = p
                idx += 1
        bit_i = 1 << i
        for t in range(N):
            j = state.next(stream)
            with _backend.errstate():
                s = K.draw_subset(np.uint64(stream.state), cands, j)
            stream.set_state(int(s))
            mask = 0
            for k in range(j):
                mask |= 1 << int(cands[k])
            x = oracle.value(mask | bit_i) - oracle.value(mask)
            if math.isnan(x):
                raise ValueError(f"oracle returned NaN for player {i}, "
                                 f"stratum {j}")
            # identical update sequence to the kernel's welford_step
            c = counts[j] + 1
            counts[j] = c
            d = x - means[j]
            mn = means[j] + d / c
            means[j] = mn
            m2[j] = m2[j] + d * (x - mn)
            if c > 1:
                s2 = m2[j] / (c - 1)
                if s2 < 0.0:
                    s2 = 0.0
                sigma_hat[j] = np.sqrt(s2)

    if policy.pooled:
        T, var_T = _pooled_T_var(counts, means, m2)
    else:
        T, var_T = _stratified_T_var(counts, means, m2)
    return PlayerEstimate(i, float(T), float(var_T), counts, means, m2,
                          sigma_hat, policy.pooled)


# ---------------------------------------------------------------------------
# whole-game estimation

@dataclass
class EstimatorReport:
    policy: str
    N: int
    seed: int
    T: np.ndarray
    var_T: np.ndarray
    phi_hat: np.ndarray
    counts: np.ndarray       # (n, n): player x stratum
    means: np.ndarray
    sigma: np.ndarray
    samples_used: np.ndarray
    budget: float
    v_hat: float
    eval_count: int
    backend: str
    elapsed: float


def _player_map(fn, n: int, threads: int = None):
    """Run fn(i) for players 0..n-1, optionally on a thread pool, and
    return results in player order (deterministic reduce)."""
    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, min(threads, n))
    if threads == 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def estimate_shapley(oracle: ValueOracle, policy: AllocationPolicy, N: int,
                     seed: int, threads: int = None,
                     force_generic: bool = False) -> EstimatorReport:
    """Estimate every player's value with budget N samples per player,
    then rebalance so the payouts sum to v(full coalition).

    Per-player runs are independent (own derived stream, own
    accumulators) and safe to parallelize; results are reduced in player
    order so the report does not depend on scheduling.
    """
    t0 = time.perf_counter()
    n = oracle.n_players
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    budget = oracle.value(full_coalition(n))

    def run(i):
        stream = Stream(derive(seed, STREAM_ESTIMATE, i))
        return stratified_estimate(oracle, i, policy, N, stream,
                                   force_generic=force_generic)

    ests = _player_map(run, n, threads)
    T = np.array([e.T for e in ests])
    var_T = np.array([e.var_T for e in ests])
    phi_hat = mle_budget_balance(T, var_T, budget)
    v_hat = float(np.sum(T))
    return EstimatorReport(
        policy=policy.name, N=N, seed=seed, T=T, var_T=var_T,
        phi_hat=phi_hat,
        counts=np.stack([e.counts for e in ests]),
        means=np.stack([e.means for e in ests]),
        sigma=np.stack([e.sigma_hat for e in ests]),
        samples_used=np.array([int(e.counts.sum()) for e in ests]),
        budget=float(budget), v_hat=v_hat,
        eval_count=oracle.eval_count,
        backend=_backend.backend_name(),
        elapsed=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# permutation-sampling baseline

@dataclass(frozen=True)
class PermutationEstimate:
    phi: np.ndarray        # per-player sample means
    variance: np.ndarray   # per-player sample variances of the marginals
    n_perms: int


def uniform_permutation_estimate(oracle: ValueOracle, N: int,
                                 stream) -> PermutationEstimate:
    """Classic unstratified baseline: N uniform player orderings, one
    prefix walk each (n+1 evaluations), one marginal sample per player
    per ordering."""
    n = oracle.n_players
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if isinstance(stream, (int, np.integer)):
        stream = Stream(int(stream))
    counts = np.zeros(n, np.int64)
    means = np.zeros(n, np.float64)
    m2 = np.zeros(n, np.float64)
    sigma = np.zeros(n, np.float64)
    K = _backend.active()
    if isinstance(oracle, ReserveGame):
        with _backend.errstate():
            s = K.reserve_permutation_run(oracle.delta_x, oracle.delta_m,
                                          oracle.q, N, np.uint64(stream.state),
                                          counts, means, m2, sigma)
        stream.set_state(int(s))
        oracle.tally(N * (n + 1))
    elif isinstance(oracle, LoadFollowGame):
        with _backend.errstate():
            s = K.loadfollow_permutation_run(oracle.demands, oracle.max_delays,
                                             oracle.target, N,
                                             np.uint64(stream.state),
                                             counts, means, m2, sigma)
        stream.set_state(int(s))
        oracle.tally(N * (n + 1))
    else:
        perm = list(range(n))
        for _ in range(N):
            for k in range(n - 1):
                r = stream.below(n - k)
                perm[k], perm[k + r] = perm[k + r], perm[k]
            mask = 0
            v_prev = oracle.value(0)
            for p in perm:
                mask |= 1 << p
                v = oracle.value(mask)
                x = v - v_prev
                v_prev = v
                c = counts[p] + 1
                counts[p] = c
                d = x - means[p]
                mn = means[p] + d / c
                means[p] = mn
                m2[p] = m2[p] + d * (x - mn)
    variance = np.zeros(n, np.float64)
    for p in range(n):
        if counts[p] > 1:
            variance[p] = max(float(m2[p]), 0.0) / (counts[p] - 1)
    return PermutationEstimate(means.copy(), variance, N)

