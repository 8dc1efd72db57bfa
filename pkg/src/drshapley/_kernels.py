"""Hot inner loops, written once and run on either backend.

Every function in this module is plain Python over NumPy scalars/arrays.
The numba backend (see _backend.py) re-executes this file and wraps each
function in @njit; the numpy backend runs it as-is.  Keeping a single
source file is what guarantees the two backends produce bit-identical
sample streams and estimates.

Rules this module must obey so the above stays true:

* uint64 arithmetic only in the RNG; the counter wraps by design.  Pure
  callers wrap invocations in np.errstate(over="ignore") -- numba does
  the equivalent silently.
* No np.sum / np.mean inside kernels: their pairwise reduction differs
  from a sequential loop.  Reductions are explicit loops in a fixed
  (ascending) order.
* No transcendental functions: libm and numba's implementations may
  differ by an ulp.  Exploration schedules are precomputed outside and
  passed in as arrays.  np.sqrt is IEEE-exact and allowed.
"""

import numpy as np

# SplitMix64 constants.
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
# Distinct absorption constants for deriving independent streams.
_DERIVE1 = np.uint64(0xA0761D6478BD642F)
_DERIVE2 = np.uint64(0xE7037ED1A0B428DB)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Stratum-selection policy codes shared with policies.py.
POLICY_EQUAL = 0
POLICY_RANDOM = 1
POLICY_NEYMAN = 2
POLICY_SIGMOID = 3


def mix64(z):
    """SplitMix64 finalizer: bijective avalanche on a uint64."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def rng_u64(s):
    s = s + _GOLDEN
    return s, mix64(s)


def rng_double(s):
    """Advance state, return (state, double in [0, 1))."""
    s = s + _GOLDEN
    z = mix64(s)
    return s, np.float64(z >> np.uint64(11)) * _INV53


def rng_below(s, m):
    """Advance state, return (state, integer in [0, m)).  m must be > 0."""
    s = s + _GOLDEN
    z = mix64(s)
    return s, np.int64(z % np.uint64(m))


def derive_seed(seed, key):
    """Derive a decorrelated child seed from (seed, key), both uint64.

    Double application of the finalizer on both inputs before combining;
    plain affine jumps of the counter would make sibling streams overlap.
    """
    a = mix64(seed ^ _DERIVE1)
    b = mix64(key ^ _DERIVE2)
    return mix64(a + b)


def draw_subset(s, cands, j):
    """Partial Fisher-Yates: after the call cands[0:j] is a uniform
    j-subset of the candidate pool (order random).  Consumes exactly j
    draws from the stream."""
    n1 = cands.shape[0]
    for k in range(j):
        s, r = rng_below(s, n1 - k)
        rr = k + r
        tmp = cands[k]
        cands[k] = cands[rr]
        cands[rr] = tmp
    return s


def select_stratum(s, t, n, policy, eps_arr, fixed_probs, sigma_hat, warm_rounds):
    """Pick the coalition-size stratum for sample index t.

    Stream contract: equal policy and warm-up rounds consume no draws;
    every other policy consumes exactly one draw per call.
    """
    if policy == POLICY_EQUAL:
        return s, t % n
    if t < warm_rounds * n:
        return s, t % n
    if policy == POLICY_RANDOM:
        return rng_below(s, n)
    s, u = rng_double(s)
    if policy == POLICY_NEYMAN:
        c = 0.0
        for j in range(n):
            c += fixed_probs[j]
            if u < c:
                return s, j
        return s, n - 1
    # POLICY_SIGMOID: explore/exploit mixture over current sigma estimates.
    e = eps_arr[t]
    ssum = 0.0
    for j in range(n):
        ssum += sigma_hat[j]
    c = 0.0
    if ssum > 0.0:
        for j in range(n):
            c += e / n + (1.0 - e) * sigma_hat[j] / ssum
            if u < c:
                return s, j
    else:
        for j in range(n):
            c += 1.0 / n
            if u < c:
                return s, j
    return s, n - 1


def welford_step(counts, means, m2, sigma_hat, j, x):
    """One online moment update for stratum j; keeps sigma_hat[j] equal to
    the unbiased sample standard deviation (0 while fewer than 2 obs)."""
    c = counts[j] + 1
    counts[j] = c
    d = x - means[j]
    mn = means[j] + d / c
    means[j] = mn
    m2[j] = m2[j] + d * (x - mn)
    if c > 1:
        v = m2[j] / (c - 1)
        if v < 0.0:
            v = 0.0  # cancellation can leave m2 at a tiny negative
        sigma_hat[j] = np.sqrt(v)


def reserve_marginal_sums(delta_x, marks, n, i):
    """Ascending-index sums over the marked coalition, with and without i.

    Ascending order matters: the Python-level game sums members the same
    way, so fused and generic estimators agree bit-for-bit.
    """
    sum_w = 0.0
    sum_wo = 0.0
    for p in range(n):
        if p == i or marks[p] == 1:
            sum_w += delta_x[p]
            if p != i:
                sum_wo += delta_x[p]
    return sum_w, sum_wo


def reserve_stratified_run(delta_x, delta_m, q, i, n_samples, policy, eps_arr,
                           fixed_probs, warm_rounds, seed,
                           counts, means, m2, sigma_hat):
    """Stratified marginal-contribution sampling for one player of the
    reserve-shortfall game.  Fills per-stratum counts/means/m2/sigma_hat
    (all length n, zero-initialized by the caller); returns final RNG state.
    """
    n = delta_x.shape[0]
    cands = np.empty(n - 1, np.int64)
    idx = 0
    for p in range(n):
        if p != i:
            cands[idx] = p
            idx += 1
    marks = np.zeros(n, np.uint8)
    s = seed
    for t in range(n_samples):
        s, j = select_stratum(s, t, n, policy, eps_arr, fixed_probs,
                              sigma_hat, warm_rounds)
        s = draw_subset(s, cands, j)
        for k in range(j):
            marks[cands[k]] = 1
        sum_w, sum_wo = reserve_marginal_sums(delta_x, marks, n, i)
        exc_w = sum_w - delta_m
        v_w = -q * exc_w if exc_w > 0.0 else 0.0
        exc_wo = sum_wo - delta_m
        v_wo = -q * exc_wo if exc_wo > 0.0 else 0.0
        x = v_w - v_wo
        for k in range(j):
            marks[cands[k]] = 0
        welford_step(counts, means, m2, sigma_hat, j, x)
    return s


def greedy_value(demands, max_delays, target, members, m, agg):
    """Value of a coalition in the load-following game.

    Members (ascending player ids, length m) commit one at a time; each
    picks the shift delay d in [0, max_delay] that best fits the residual
    target given everyone already committed, ties -> smallest d.  A load
    shifted by d occupies slots d..T-1; the part sliding past the horizon
    is dropped, not wrapped.  Returns (|y|^2 - |y - s|^2) / T.  agg is a
    caller-supplied scratch array of length T, overwritten here.
    """
    T = target.shape[0]
    for t in range(T):
        agg[t] = 0.0
    for k in range(m):
        p = members[k]
        dmax = max_delays[p]
        best_d = 0
        best_ssd = np.inf
        for d in range(dmax + 1):
            ssd = 0.0
            for t in range(T):
                r = target[t] - agg[t]
                if t >= d:
                    r -= demands[p, t - d]
                ssd += r * r
            if ssd < best_ssd:
                best_ssd = ssd
                best_d = d
        for t in range(best_d, T):
            agg[t] += demands[p, t - best_d]
    y2 = 0.0
    ssd = 0.0
    for t in range(T):
        y2 += target[t] * target[t]
        r = target[t] - agg[t]
        ssd += r * r
    return (y2 - ssd) / T


def loadfollow_stratified_run(demands, max_delays, target, i, n_samples,
                              policy, eps_arr, fixed_probs, warm_rounds, seed,
                              counts, means, m2, sigma_hat):
    """Stratified sampling for one player of the load-following game.
    Same contract as reserve_stratified_run."""
    n = demands.shape[0]
    T = target.shape[0]
    cands = np.empty(n - 1, np.int64)
    idx = 0
    for p in range(n):
        if p != i:
            cands[idx] = p
            idx += 1
    marks = np.zeros(n, np.uint8)
    mw = np.empty(n, np.int64)
    mwo = np.empty(n, np.int64)
    agg = np.empty(T, np.float64)
    s = seed
    for t in range(n_samples):
        s, j = select_stratum(s, t, n, policy, eps_arr, fixed_probs,
                              sigma_hat, warm_rounds)
        s = draw_subset(s, cands, j)
        for k in range(j):
            marks[cands[k]] = 1
        cw = 0
        cwo = 0
        for p in range(n):
            if p == i or marks[p] == 1:
                mw[cw] = p
                cw += 1
                if p != i:
                    mwo[cwo] = p
                    cwo += 1
        v_w = greedy_value(demands, max_delays, target, mw, cw, agg)
        v_wo = greedy_value(demands, max_delays, target, mwo, cwo, agg)
        x = v_w - v_wo
        for k in range(j):
            marks[cands[k]] = 0
        welford_step(counts, means, m2, sigma_hat, j, x)
    return s


def reserve_permutation_run(delta_x, delta_m, q, n_perms, seed,
                            counts, means, m2, sigma_hat):
    """Uniform random permutations, one prefix walk each; pools every
    player's marginal into per-player (not per-stratum) moments.  The
    out-arrays are indexed by player.  Returns final RNG state.

    Each prefix sum is recomputed over ascending player index, not
    accumulated in permutation order, so values match evaluate() exactly.
    """
    n = delta_x.shape[0]
    perm = np.empty(n, np.int64)
    marks = np.zeros(n, np.uint8)
    for p in range(n):
        perm[p] = p
    s = seed
    for _ in range(n_perms):
        for k in range(n - 1):
            s, r = rng_below(s, n - k)
            rr = k + r
            tmp = perm[k]
            perm[k] = perm[rr]
            perm[rr] = tmp
        v_prev = 0.0
        for k in range(n):
            p = perm[k]
            marks[p] = 1
            run = 0.0
            for r in range(n):
                if marks[r] == 1:
                    run += delta_x[r]
            exc = run - delta_m
            v_new = -q * exc if exc > 0.0 else 0.0
            welford_step(counts, means, m2, sigma_hat, p, v_new - v_prev)
            v_prev = v_new
        for p in range(n):
            marks[p] = 0
    return s


def loadfollow_permutation_run(demands, max_delays, target, n_perms, seed,
                               counts, means, m2, sigma_hat):
    """Permutation sampling for the load-following game; the growing prefix
    is kept sorted so the greedy commit order is always ascending id."""
    n = demands.shape[0]
    T = target.shape[0]
    perm = np.empty(n, np.int64)
    for p in range(n):
        perm[p] = p
    sorted_prefix = np.empty(n, np.int64)
    agg = np.empty(T, np.float64)
    s = seed
    for _ in range(n_perms):
        for k in range(n - 1):
            s, r = rng_below(s, n - k)
            rr = k + r
            tmp = perm[k]
            perm[k] = perm[rr]
            perm[rr] = tmp
        m = 0
        v_prev = 0.0
        for k in range(n):
            p = perm[k]
            pos = m
            while pos > 0 and sorted_prefix[pos - 1] > p:
                sorted_prefix[pos] = sorted_prefix[pos - 1]
                pos -= 1
            sorted_prefix[pos] = p
            m += 1
            v_new = greedy_value(demands, max_delays, target,
                                 sorted_prefix, m, agg)
            welford_step(counts, means, m2, sigma_hat, p, v_new - v_prev)
            v_prev = v_new
    return s


def reserve_value_table(delta_x, delta_m, q, out):
    """Fill out[mask] = v(coalition encoded by mask) for every mask.
    out has length 2**n.  Member sums run in ascending player order."""
    n = delta_x.shape[0]
    size = out.shape[0]
    for mask in range(size):
        tot = 0.0
        for p in range(n):
            if (mask >> p) & 1:
                tot += delta_x[p]
        exc = tot - delta_m
        out[mask] = -q * exc if exc > 0.0 else 0.0


def loadfollow_value_table(demands, max_delays, target, out):
    """Exhaustive coalition values for the load-following game."""
    n = demands.shape[0]
    T = target.shape[0]
    size = out.shape[0]
    members = np.empty(n, np.int64)
    agg = np.empty(T, np.float64)
    for mask in range(size):
        m = 0
        for p in range(n):
            if (mask >> p) & 1:
                members[m] = p
                m += 1
        out[mask] = greedy_value(demands, max_delays, target, members, m, agg)


def popcount_table(size):
    """pc[mask] = number of set bits, for masks 0..size-1 (size = 2**n)."""
    pc = np.zeros(size, np.uint8)
    for mask in range(1, size):
        pc[mask] = pc[mask >> 1] + np.uint8(mask & 1)
    return pc


def table_strata_moments(values, n, counts, means, m2):
    """Exhaustive per-(player, stratum) moments from a full value table.

    For every player i and every coalition S not containing i, the
    marginal v(S+i) - v(S) is folded into stratum j = |S|.  counts,
    means, m2 are (n, n) arrays, zero-initialized by the caller.  The m2
    here is the raw sum of squared deviations: divide by counts (not
    counts - 1) for the exact population variance of the stratum.
    """
    size = values.shape[0]
    pc = popcount_table(size)
    scratch_sigma = np.zeros(n, np.float64)
    for i in range(n):
        bit = 1 << i
        ci = counts[i]
        mi = means[i]
        si = m2[i]
        for mask in range(size):
            if mask & bit:
                continue
            j = np.int64(pc[mask])
            x = values[mask | bit] - values[mask]
            welford_step(ci, mi, si, scratch_sigma, j, x)


def table_weighted_phi(values, n, weights, phi):
    """Subset-form Shapley values from a full value table.

    phi[i] = sum over coalitions S without i of
             weights[|S|] * (v(S + i) - v(S)),
    with weights[j] = j! (n-1-j)! / n! supplied by the caller.
    """
    size = values.shape[0]
    pc = popcount_table(size)
    for i in range(n):
        bit = 1 << i
        acc = 0.0
        for mask in range(size):
            if mask & bit:
                continue
            acc += weights[np.int64(pc[mask])] * (values[mask | bit] - values[mask])
        phi[i] = acc
