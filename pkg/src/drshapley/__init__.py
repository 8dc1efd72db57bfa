"""Shapley-value payouts for cooperative demand-response games.

The package pairs two value functions from aggregator settings (a
reserve-shortfall penalty game and a deferrable-load-following game)
with an exact enumerator for small player counts and a stratified
Monte Carlo estimator for large ones.  Sample allocation across the
coalition-size strata is pluggable: equal, unstratified, exact
sigma-proportional, or an explore/exploit schedule that learns the
stratum deviations online.  Estimates are finished with a
maximum-likelihood correction so payouts always sum to the value of
the full coalition.

Set DRSHAPLEY_BACKEND=numpy to skip JIT compilation (same numbers,
slower); DRSHAPLEY_BACKEND=numba insists on the compiled kernels.
"""

from ._backend import backend_name
from .core import (CachedOracle, Coalition, ValueOracle, coalition_of,
                   coalition_size, contains, empty_coalition, full_coalition,
                   iter_members, marginal_contribution,
                   sample_coalition_of_size, with_member, without_member)
from .estimator import (EstimatorReport, PlayerEstimate, StrataProfile,
                        StratumStats, analytic_var_es, analytic_var_rs,
                        analytic_var_sd, benefit_ratio, estimate_shapley,
                        exhaustive_strata_profiles, mle_budget_balance,
                        neyman_sigma_matrix, pilot_strata_profiles,
                        stratified_estimate, uniform_permutation_estimate,
                        welford_update)
from .exact import (ExactShapleyResult, SizeCapError, shapley_exact_permutations,
                    shapley_exact_subsets, subset_weights, value_table)
from .experiments import (BenefitReport, MspeReport, benefit_report,
                          empirical_variance, mspe, mspe_table, regret_curve,
                          repeated_estimates, variance_curve)
from .games import (GameDataError, LoadFollowGame, LoadProfile, ReserveGame,
                    derive_target, generate_load_follow_game,
                    generate_load_profiles, generate_reserve_game,
                    greedy_schedule, ingest_load_csv, load_follow_from_profiles,
                    read_reserve_csv, write_load_csv)
from .policies import (AllocationPolicy, EpsilonSchedule, EqualPolicy,
                       NeymanPolicy, PolicyState, RandomPolicy, SigmoidPolicy,
                       SteppedPolicy, SteppedSchedule, make_policy,
                       neyman_allocation, next_stratum,
                       sampling_probabilities)
from .rng import Stream, derive

__version__ = "0.1.0"

__all__ = [
    "AllocationPolicy", "BenefitReport", "CachedOracle", "Coalition",
    "EpsilonSchedule", "EqualPolicy", "EstimatorReport", "ExactShapleyResult",
    "GameDataError", "LoadFollowGame", "LoadProfile", "MspeReport",
    "NeymanPolicy", "PlayerEstimate", "PolicyState", "RandomPolicy",
    "ReserveGame", "SigmoidPolicy", "SizeCapError", "SteppedPolicy",
    "SteppedSchedule", "StrataProfile", "StratumStats", "Stream",
    "ValueOracle", "analytic_var_es", "analytic_var_rs", "analytic_var_sd",
    "backend_name", "benefit_ratio", "benefit_report", "coalition_of",
    "coalition_size", "contains", "derive", "derive_target",
    "empirical_variance", "empty_coalition", "estimate_shapley",
    "exhaustive_strata_profiles", "full_coalition",
    "generate_load_follow_game", "generate_load_profiles",
    "generate_reserve_game", "greedy_schedule", "ingest_load_csv",
    "iter_members", "load_follow_from_profiles", "make_policy",
    "marginal_contribution", "mle_budget_balance", "mspe", "mspe_table",
    "neyman_allocation", "neyman_sigma_matrix", "next_stratum",
    "pilot_strata_profiles", "read_reserve_csv", "regret_curve",
    "repeated_estimates", "sample_coalition_of_size",
    "sampling_probabilities", "shapley_exact_permutations",
    "shapley_exact_subsets", "stratified_estimate", "subset_weights",
    "uniform_permutation_estimate", "value_table", "variance_curve",
    "welford_update", "with_member", "without_member", "write_load_csv",
]
