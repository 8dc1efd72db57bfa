"""Repeated-run experiment drivers: variance-vs-budget curves, regret
curves, the normalized MSPE table, and the benefit-ratio check.

Every driver is deterministic given (game, seed): repetition r always
runs on the stream derived from (seed, STREAM_REP, r), so two policies
compared at the same seed see identical repetition seeds (paired
comparisons), and thread count never changes the numbers.

Curves and regrets are measured on the raw statistic T, before the
budget-balancing correction, because that is the quantity the analytic
variance formulas describe.  The MSPE table uses the corrected phi_hat,
which is what a caller of the estimator actually receives.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ValueOracle
from .estimator import (analytic_var_es, analytic_var_rs, analytic_var_sd,
                        benefit_ratio, estimate_shapley,
                        exhaustive_strata_profiles, pilot_strata_profiles,
                        sigma_matrix_from_profiles)
from .exact import shapley_exact_subsets
from .policies import make_policy
from .rng import STREAM_REP, derive

# analytic curve shown next to each policy's empirical one: equal
# allocation realizes var_ES, unstratified sampling realizes var_RS, and
# the oracle policy realizes var_SD, which is also the sigmoid/stepped
# schedules' convergence target
ANALYTIC_BY_POLICY = {
    "equal": analytic_var_es,
    "random": analytic_var_rs,
    "neyman": analytic_var_sd,
    "sigmoid": analytic_var_sd,
    "stepped": analytic_var_sd,
}

RECOMMEND_THRESHOLD = 1.2


def game_strata_profiles(oracle: ValueOracle, seed: int,
                         exhaustive_cap: int = 12,
                         pilot_budget: int = 10 ** 6, threads=None):
    """Strata profiles for every player: exact enumeration when the game
    is small, an equal-allocation pilot (pilot_budget samples per player)
    otherwise."""
    if oracle.n_players <= exhaustive_cap:
        return exhaustive_strata_profiles(oracle, exhaustive_cap)
    return pilot_strata_profiles(oracle, pilot_budget, seed, threads)


@dataclass(frozen=True)
class RepeatedRuns:
    """R independent estimates of the same game under one policy."""
    policy: str
    N: int
    T: np.ndarray        # (R, n)
    var_T: np.ndarray    # (R, n)
    phi_hat: np.ndarray  # (R, n)


def repeated_estimates(oracle: ValueOracle, policy, N: int, reps: int,
                       seed: int, threads=None) -> RepeatedRuns:
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")

    def run(r):
        return estimate_shapley(oracle, policy, N, derive(seed, STREAM_REP, r),
                                threads=1)

    if reps == 1 or threads == 1:
        # few repetitions: let the per-player pool do the work instead
        reports = [estimate_shapley(oracle, policy, N,
                                    derive(seed, STREAM_REP, r), threads)
                   for r in range(reps)]
    else:
        workers = min(threads, reps) if threads else reps
        with ThreadPoolExecutor(max_workers=max(1, min(workers, 32))) as ex:
            reports = list(ex.map(run, range(reps)))
    return RepeatedRuns(policy.name, N,
                        np.stack([r.T for r in reports]),
                        np.stack([r.var_T for r in reports]),
                        np.stack([r.phi_hat for r in reports]))


def empirical_variance(T: np.ndarray) -> float:
    """Across-repetition sample variance, averaged over players."""
    T = np.asarray(T, np.float64)
    if T.ndim != 2 or T.shape[0] < 2:
        raise ValueError("need a (reps, players) matrix with reps >= 2")
    return float(np.mean(np.var(T, axis=0, ddof=1)))


class _RunCache:
    # memoizes (policy name, N) -> RepeatedRuns so the regret curve does
    # not recompute its neyman baseline per schedule
    def __init__(self, oracle, smat, reps, seed, gamma, beta, threads):
        self.oracle = oracle
        self.smat = smat
        self.reps = reps
        self.seed = seed
        self.gamma = gamma
        self.beta = beta
        self.threads = threads
        self._runs = {}

    def runs(self, name: str, N: int) -> RepeatedRuns:
        key = (name, N)
        if key not in self._runs:
            pol = make_policy(name, gamma=self.gamma, beta=self.beta,
                              sigma_matrix=self.smat)
            self._runs[key] = repeated_estimates(self.oracle, pol, N,
                                                 self.reps, self.seed,
                                                 self.threads)
        return self._runs[key]


@dataclass(frozen=True)
class CurvePoint:
    policy: str
    N: int
    empirical_var: float
    analytic_var: float


def variance_curve(oracle: ValueOracle, policy_names, n_grid, reps: int,
                   seed: int, gamma: float = 0.2, beta: float = 0.075,
                   threads=None, exhaustive_cap: int = 12,
                   pilot_budget: int = 10 ** 6):
    """Empirical variance of T per (policy, N), with the matching
    analytic curve evaluated on the game's strata profiles."""
    if not policy_names:
        raise ValueError("policy list is empty")
    if reps < 2:
        raise ValueError("variance needs reps >= 2")
    n_grid = [int(N) for N in n_grid]
    if not n_grid or any(N < 1 for N in n_grid):
        raise ValueError("N grid must be non-empty positive")
    profiles = game_strata_profiles(oracle, seed, exhaustive_cap,
                                    pilot_budget, threads)
    smat = sigma_matrix_from_profiles(profiles)
    cache = _RunCache(oracle, smat, reps, seed, gamma, beta, threads)
    rows = []
    for name in policy_names:
        try:
            fn = ANALYTIC_BY_POLICY[name]
        except KeyError:
            raise ValueError(f"no analytic curve for policy {name!r}")
        for N in n_grid:
            emp = empirical_variance(cache.runs(name, N).T)
            ana = float(np.mean([fn(p, N) for p in profiles]))
            rows.append(CurvePoint(name, N, emp, ana))
    return rows


@dataclass(frozen=True)
class RegretPoint:
    schedule: str
    N: int
    regret: float


def regret_curve(oracle: ValueOracle, schedule_names, n_grid, reps: int,
                 seed: int, gamma: float = 0.2, beta: float = 0.075,
                 threads=None, exhaustive_cap: int = 12,
                 pilot_budget: int = 10 ** 6):
    """Excess empirical variance of each schedule over the
    sigma-proportional oracle policy at the same budget, paired seeds.
    The oracle policy's own row is exactly 0 by this construction."""
    if not schedule_names:
        raise ValueError("schedule list is empty")
    if reps < 2:
        raise ValueError("variance needs reps >= 2")
    n_grid = [int(N) for N in n_grid]
    if not n_grid or any(N < 1 for N in n_grid):
        raise ValueError("N grid must be non-empty positive")
    profiles = game_strata_profiles(oracle, seed, exhaustive_cap,
                                    pilot_budget, threads)
    smat = sigma_matrix_from_profiles(profiles)
    cache = _RunCache(oracle, smat, reps, seed, gamma, beta, threads)
    rows = []
    for name in schedule_names:
        for N in n_grid:
            base = empirical_variance(cache.runs("neyman", N).T)
            emp = empirical_variance(cache.runs(name, N).T)
            rows.append(RegretPoint(name, N, emp - base))
    return rows


def mspe(estimates, truth) -> float:
    """Mean over repetitions and players of the squared estimation error."""
    est = np.asarray(estimates, np.float64)
    t = np.asarray(truth, np.float64)
    if est.ndim != 2 or t.ndim != 1 or est.shape[1] != t.shape[0]:
        raise ValueError(f"shape mismatch: estimates {est.shape} "
                         f"vs truth {t.shape}")
    return float(np.mean((est - t[None, :]) ** 2))


@dataclass(frozen=True)
class MspeReport:
    policies: tuple
    mspe: dict          # policy -> money^2
    normalized: dict    # policy -> ratio to the oracle policy's MSPE
    per_player: dict    # policy -> per-player mean squared error
    truth: np.ndarray
    N: int
    reps: int
    seed: int


def mspe_table(oracle: ValueOracle, policy_names, N: int, reps: int,
               seed: int, gamma: float = 0.2, beta: float = 0.075,
               threads=None, exhaustive_cap: int = 12,
               pilot_budget: int = 10 ** 6) -> MspeReport:
    """Squared error of the corrected estimates against exhaustive ground
    truth, normalized so the sigma-proportional oracle policy reads 1."""
    if not policy_names:
        raise ValueError("policy list is empty")
    truth = shapley_exact_subsets(oracle).phi
    profiles = game_strata_profiles(oracle, seed, exhaustive_cap,
                                    pilot_budget, threads)
    smat = sigma_matrix_from_profiles(profiles)
    names = list(dict.fromkeys(policy_names))
    if "neyman" not in names:
        names.append("neyman")   # normalization baseline is always run
    cache = _RunCache(oracle, smat, reps, seed, gamma, beta, threads)
    raw, per_player = {}, {}
    for name in names:
        phi_hat = cache.runs(name, N).phi_hat
        raw[name] = mspe(phi_hat, truth)
        per_player[name] = np.mean((phi_hat - truth[None, :]) ** 2, axis=0)
    base = raw["neyman"]
    normalized = {}
    for name in names:
        if base > 0.0:
            normalized[name] = raw[name] / base
        else:
            normalized[name] = 1.0 if raw[name] == 0.0 else math.inf
    return MspeReport(tuple(names), raw, normalized, per_player, truth,
                      int(N), int(reps), int(seed))


@dataclass(frozen=True)
class BenefitReport:
    """Per-player gains available from sigma-proportional allocation."""
    ratios: np.ndarray       # NaN for players whose strata are all zero-sigma
    median_ratio: float
    recommendation: str
    skipped: tuple           # players with no variability anywhere


def benefit_report(oracle: ValueOracle, seed: int,
                   pilot_budget: int = 20000, threads=None,
                   exhaustive_cap: int = 12) -> BenefitReport:
    """Estimate each player's variance ratio var_ES/var_SD and recommend
    an allocation.  Players whose every stratum has zero sigma carry no
    estimator variance at all and are excluded from the median."""
    profiles = game_strata_profiles(oracle, seed, exhaustive_cap,
                                    pilot_budget, threads)
    n = oracle.n_players
    ratios = np.full(n, np.nan)
    skipped = []
    for i, p in enumerate(profiles):
        if float(np.mean(p.sigma)) > 0.0:
            ratios[i] = benefit_ratio(p)
        else:
            skipped.append(i)
    valid = ratios[np.isfinite(ratios)]
    if valid.size == 0:
        raise ValueError("every player has zero sigma in every stratum; "
                         "any allocation is equally good")
    med = float(np.median(valid))
    if med < RECOMMEND_THRESHOLD:
        rec = "equal sampling adequate"
    else:
        rec = "sigma-proportional sampling recommended"
    return BenefitReport(ratios, med, rec, tuple(skipped))
