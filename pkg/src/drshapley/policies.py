"""Stratum-selection policies for the sampling estimator.

Four policies share one kernel-side selection routine, identified by an
integer code:

* equal   -- deterministic round-robin, exactly floor/ceil(N/n) per stratum
* random  -- uniform stratum each draw (the unstratified baseline; its
             estimates are pooled rather than stratified downstream)
* neyman  -- draws from a fixed sigma-proportional distribution (the
             oracle policy; needs per-stratum sigmas up front)
* sigmoid -- explore/exploit mixture with a decreasing exploration
             schedule, steered by the online sigma estimates

The schedule values are precomputed into an array here (transcendental
functions stay out of the kernels so both backends see identical bits).
"""

import numpy as np

from . import _backend
from ._kernels import POLICY_EQUAL, POLICY_NEYMAN, POLICY_RANDOM, POLICY_SIGMOID
from .rng import Stream


class EpsilonSchedule:
    """Double-sigmoid exploration probability.

    eps(t) = kappa - 1 / (1 + exp((gamma - t/N) / beta)) with
    kappa = 1 + 1 / (1 + exp(gamma / beta)), which pins eps(0) = 1.
    Decreasing in t; at t = gamma*N it has fallen to kappa - 1/2.
    """

    def __init__(self, N: int, gamma: float = 0.2, beta: float = 0.075):
        if beta <= 0:
            raise ValueError(f"beta must be > 0, got {beta}")
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        self.N = int(N)
        self.gamma = float(gamma)
        self.beta = float(beta)
        self.kappa = 1.0 + 1.0 / (1.0 + np.exp(self.gamma / self.beta))

    def __call__(self, t) -> float:
        if not 0 <= t <= self.N:
            raise ValueError(f"t={t} outside [0, {self.N}]")
        u = (self.gamma - t / self.N) / self.beta
        return float(self.kappa - 1.0 / (1.0 + np.exp(u)))

    def array(self) -> np.ndarray:
        """eps evaluated at t = 0..N-1, ready to hand to the kernels."""
        t = np.arange(self.N, dtype=np.float64)
        u = (self.gamma - t / self.N) / self.beta
        return self.kappa - 1.0 / (1.0 + np.exp(u))


class SteppedSchedule:
    """Piecewise-constant exploration schedule (same interface as the
    sigmoid one; not used by default).  steps is a sequence of
    (fraction_of_N, eps) pairs with increasing fractions ending at 1.0
    and non-increasing eps values."""

    def __init__(self, N: int, steps=((0.25, 1.0), (0.5, 0.5), (0.75, 0.25),
                                      (1.0, 0.1))):
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        fracs = [s[0] for s in steps]
        vals = [s[1] for s in steps]
        if not steps or fracs[-1] != 1.0 or sorted(fracs) != fracs:
            raise ValueError("step fractions must increase and end at 1.0")
        if any(not 0 < v <= 1 for v in vals) or sorted(vals, reverse=True) != vals:
            raise ValueError("eps values must be in (0, 1] and non-increasing")
        self.N = int(N)
        self.steps = tuple((float(f), float(v)) for f, v in steps)

    def __call__(self, t) -> float:
        if not 0 <= t <= self.N:
            raise ValueError(f"t={t} outside [0, {self.N}]")
        frac = t / self.N
        for f, v in self.steps:
            if frac <= f:
                return v
        return self.steps[-1][1]

    def array(self) -> np.ndarray:
        out = np.empty(self.N, np.float64)
        for t in range(self.N):
            out[t] = self(t)
        return out


def sampling_probabilities(eps: float, sigma_hat) -> np.ndarray:
    """Mixture eps * uniform + (1 - eps) * sigma-proportional.

    While every sigma estimate is still 0 the exploitation term falls
    back to uniform, so the output is always a probability vector with
    every entry >= eps/n.
    """
    sh = np.asarray(sigma_hat, np.float64)
    if sh.ndim != 1 or sh.size == 0:
        raise ValueError("sigma_hat must be a non-empty vector")
    if np.any(sh < 0) or not np.all(np.isfinite(sh)):
        raise ValueError("sigma_hat entries must be finite and >= 0")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    n = sh.size
    tot = float(np.sum(sh))
    if tot > 0.0:
        exploit = sh / tot
    else:
        exploit = np.full(n, 1.0 / n)
    return eps / n + (1.0 - eps) * exploit


def neyman_allocation(sigma, N: int) -> np.ndarray:
    """Integer sample counts proportional to per-stratum sigmas.

    Real targets N*sigma_j/sum(sigma) are rounded by largest remainder
    (ties to the lowest index), so the counts sum to N exactly and each
    is within 1 of its target.
    """
    s = np.asarray(sigma, np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("sigma must be a non-empty vector")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("sigma entries must be finite and >= 0")
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    tot = float(np.sum(s))
    if tot <= 0:
        raise ValueError("all-zero sigma: allocation undefined")
    targets = N * s / tot
    base = np.floor(targets).astype(np.int64)
    short = int(N - base.sum())
    if short > 0:
        # stable sort on negated remainders keeps lowest index first on ties
        order = np.argsort(-(targets - base), kind="stable")
        base[order[:short]] += 1
    return base


class AllocationPolicy:
    """Base: a policy is configuration only; per-run state lives in
    PolicyState so one policy object can serve many players/runs."""

    name = "?"
    code = -1
    pooled = False       # True -> downstream uses the unstratified mean
    warm_rounds = 0      # forced round-robin visits per stratum up front

    def eps_array(self, N: int) -> np.ndarray:
        return np.zeros(0, np.float64)

    def fixed_probs(self, player: int, n: int) -> np.ndarray:
        return np.zeros(0, np.float64)

    def __repr__(self):
        return f"{type(self).__name__}()"


class EqualPolicy(AllocationPolicy):
    """Round-robin over strata: stratum t mod n at step t."""
    name = "equal"
    code = POLICY_EQUAL


class RandomPolicy(AllocationPolicy):
    """Uniform stratum each step; the resulting draws are equivalent to
    unstratified coalition sampling, and downstream statistics pool them
    (stratification would otherwise hide this baseline's var(mu) term)."""
    name = "random"
    code = POLICY_RANDOM
    pooled = True


class NeymanPolicy(AllocationPolicy):
    """Oracle policy: draws strata from the sigma-proportional
    distribution, using known (true or pilot-estimated) sigmas.

    Two warm-up visits per stratum run first: zero-sigma strata would
    otherwise never be sampled, and an unsampled stratum with nonzero
    mean would bias the stratified statistic.  Their cost is 2n samples
    out of N.
    """
    name = "neyman"
    code = POLICY_NEYMAN
    warm_rounds = 2

    def __init__(self, sigma_matrix):
        sm = np.ascontiguousarray(sigma_matrix, np.float64)
        if sm.ndim != 2 or sm.shape[0] != sm.shape[1]:
            raise ValueError("sigma_matrix must be (n, n): per-player rows "
                             "of per-stratum sigmas")
        if np.any(sm < 0) or not np.all(np.isfinite(sm)):
            raise ValueError("sigmas must be finite and >= 0")
        self.sigma_matrix = sm

    def fixed_probs(self, player: int, n: int) -> np.ndarray:
        if self.sigma_matrix.shape[0] != n:
            raise ValueError(f"policy built for n={self.sigma_matrix.shape[0]}, "
                             f"game has n={n}")
        row = self.sigma_matrix[player]
        tot = float(np.sum(row))
        if tot <= 0:
            return np.full(n, 1.0 / n)
        return row / tot

    def __repr__(self):
        return f"NeymanPolicy(n={self.sigma_matrix.shape[0]})"


class SigmoidPolicy(AllocationPolicy):
    """The adaptive allocator: eps-mixture of uniform exploration and
    sigma_hat-proportional exploitation, eps following the double
    sigmoid.  Starts with two forced visits to every stratum so sigma
    estimates exist before exploitation can dominate."""
    name = "sigmoid"
    code = POLICY_SIGMOID
    warm_rounds = 2

    def __init__(self, gamma: float = 0.2, beta: float = 0.075,
                 schedule_cls=EpsilonSchedule):
        if beta <= 0:
            raise ValueError(f"beta must be > 0, got {beta}")
        self.gamma = float(gamma)
        self.beta = float(beta)
        self.schedule_cls = schedule_cls

    def eps_array(self, N: int) -> np.ndarray:
        return self.schedule_cls(N, self.gamma, self.beta).array()

    def __repr__(self):
        return f"SigmoidPolicy(gamma={self.gamma}, beta={self.beta})"


class SteppedPolicy(SigmoidPolicy):
    """Same adaptive mixture driven by the stepped schedule."""
    name = "stepped"

    def __init__(self, steps=None):
        self.gamma = None
        self.beta = None
        self.steps = steps

    def eps_array(self, N: int) -> np.ndarray:
        if self.steps is None:
            return SteppedSchedule(N).array()
        return SteppedSchedule(N, self.steps).array()

    def __repr__(self):
        return "SteppedPolicy()"


class PolicyState:
    """Per-run selection state for one player: the step counter, the
    shared sigma_hat view the estimator updates, and the precomputed
    schedule/probability arrays the kernel selector needs."""

    def __init__(self, policy: AllocationPolicy, n: int, N: int, player: int = 0):
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        self.policy = policy
        self.n = int(n)
        self.N = int(N)
        self.player = int(player)
        self.t = 0
        self.sigma_hat = np.zeros(n, np.float64)
        self.eps = policy.eps_array(N)
        self.probs = policy.fixed_probs(player, n)

    @property
    def pi(self) -> np.ndarray:
        """Current stratum distribution (introspection only; selection
        goes through the kernel)."""
        n, t = self.n, min(self.t, self.N - 1)
        code = self.policy.code
        if code == POLICY_EQUAL or t < self.policy.warm_rounds * n:
            out = np.zeros(n)
            out[t % n] = 1.0
            return out
        if code == POLICY_RANDOM:
            return np.full(n, 1.0 / n)
        if code == POLICY_NEYMAN:
            return self.probs.copy()
        return sampling_probabilities(float(self.eps[t]), self.sigma_hat)

    def next(self, stream: Stream) -> int:
        if self.t >= self.N:
            raise ValueError(f"run exhausted: t={self.t} >= N={self.N}")
        K = _backend.active()
        with _backend.errstate():
            s, j = K.select_stratum(np.uint64(stream.state), self.t, self.n,
                                    self.policy.code, self.eps, self.probs,
                                    self.sigma_hat, self.policy.warm_rounds)
        stream.set_state(int(s))
        self.t += 1
        return int(j)


def next_stratum(state: PolicyState, stream: Stream) -> int:
    """Draw the stratum for the next sample and advance the state."""
    return state.next(stream)


_BY_NAME = {
    "equal": EqualPolicy,
    "random": RandomPolicy,
    "sigmoid": SigmoidPolicy,
    "stepped": SteppedPolicy,
    "neyman": NeymanPolicy,
}

POLICY_NAMES = ("random", "equal", "neyman", "sigmoid")


def make_policy(name: str, gamma: float = 0.2, beta: float = 0.075,
                sigma_matrix=None) -> AllocationPolicy:
    """Policy factory used by the CLI; `neyman` needs sigma_matrix."""
    if name not in _BY_NAME:
        raise ValueError(f"unknown policy {name!r}; expected one of "
                         f"{sorted(_BY_NAME)}")
    if name == "neyman":
        if sigma_matrix is None:
            raise ValueError("neyman policy needs a sigma_matrix "
                             "(exhaustive or pilot strata profile)")
        return NeymanPolicy(sigma_matrix)
    if name == "sigmoid":
        return SigmoidPolicy(gamma, beta)
    if name == "stepped":
        return SteppedPolicy()
    return _BY_NAME[name]()
