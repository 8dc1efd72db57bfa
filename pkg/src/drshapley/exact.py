"""Exact Shapley values by exhaustive enumeration.

Two independent forms:

* subset form -- one pass over all 2**n coalition values, each marginal
  weighted by |S|! (n-|S|-1)! / n!
* permutation form -- the direct average of marginal vectors over all
  n! player orderings

They agree to rounding error; tests lean on that as a cross-check since
the two derivations share no code beyond the value table.
"""

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .core import ValueOracle, full_coalition
from .games import LoadFollowGame, ReserveGame

SUBSET_CAP = 24          # 2**24 value-table entries, ~128 MB
PERMUTATION_CAP = 10     # 10! orderings


class SizeCapError(ValueError):
    """Game too large for exhaustive enumeration."""


@dataclass
class ExactShapleyResult:
    phi: np.ndarray
    evals: int
    elapsed: float
    method: str = "subsets"


def subset_weights(n: int) -> np.ndarray:
    """weights[j] = j! (n-1-j)! / n! for j = 0..n-1.

    Computed in log space (lgamma) so nothing overflows for any n the
    caps allow; validated against exact rationals in the tests.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    logfact = [math.lgamma(k + 1) for k in range(n + 1)]
    w = np.empty(n, np.float64)
    for j in range(n):
        w[j] = math.exp(logfact[j] + logfact[n - 1 - j] - logfact[n])
    return w


def value_table(oracle: ValueOracle, cap: int = SUBSET_CAP) -> np.ndarray:
    """v(S) for every coalition mask 0..2**n-1, counted as 2**n
    evaluations on the oracle."""
    n = oracle.n_players
    if n > cap:
        raise SizeCapError(
            f"n={n} exceeds the exhaustive cap of {cap} (2**{n} coalition "
            f"evaluations); use the sampling estimator instead")
    size = 1 << n
    out = np.empty(size, np.float64)
    K = _backend.active()
    if isinstance(oracle, ReserveGame):
        K.reserve_value_table(oracle.delta_x, oracle.delta_m, oracle.q, out)
        oracle.tally(size)
    elif isinstance(oracle, LoadFollowGame):
        K.loadfollow_value_table(oracle.demands, oracle.max_delays,
                                 oracle.target, out)
        oracle.tally(size)
    else:
        for mask in range(size):
            out[mask] = oracle.value(mask)
    return out


def shapley_exact_subsets(oracle: ValueOracle, cap: int = SUBSET_CAP) -> ExactShapleyResult:
    t0 = time.perf_counter()
    n = oracle.n_players
    values = value_table(oracle, cap)
    w = subset_weights(n)
    phi = np.zeros(n, np.float64)
    K = _backend.active()
    K.table_weighted_phi(values, n, w, phi)
    return ExactShapleyResult(phi, 1 << n, time.perf_counter() - t0, "subsets")


def shapley_exact_permutations(oracle: ValueOracle,
                               cap: int = PERMUTATION_CAP) -> ExactShapleyResult:
    t0 = time.perf_counter()
    n = oracle.n_players
    if n > cap:
        raise SizeCapError(
            f"n={n} exceeds the permutation-form cap of {cap} "
            f"({math.factorial(cap)} orderings); use the subset form")
    values = value_table(oracle, cap)
    acc = [0.0] * n
    for perm in itertools.permutations(range(n)):
        mask = 0
        v_prev = values[0]
        for p in perm:
            mask |= 1 << p
            v = values[mask]
            acc[p] += v - v_prev
            v_prev = v
    fact = math.factorial(n)
    phi = np.array([a / fact for a in acc], np.float64)
    return ExactShapleyResult(phi, 1 << n, time.perf_counter() - t0,
                              "permutations")


def exact_strata_moments(oracle: ValueOracle, cap: int = SUBSET_CAP):
    """Exhaustive per-(player, stratum) marginal moments.

    Returns (counts, means, m2) as (n, n) arrays; m2 is the raw sum of
    squared deviations, so m2/count is the exact population variance of
    stratum j for player i.  Averaging means[i] over strata reproduces
    phi[i]: together with the weighted subset form this gives two routes
    to the same number.
    """
    n = oracle.n_players
    values = value_table(oracle, cap)
    counts = np.zeros((n, n), np.int64)
    means = np.zeros((n, n), np.float64)
    m2 = np.zeros((n, n), np.float64)
    K = _backend.active()
    K.table_strata_moments(values, n, counts, means, m2)
    return counts, means, m2
