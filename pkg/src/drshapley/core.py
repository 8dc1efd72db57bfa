"""Coalitions, value oracles, and the sampling primitives built on them.

A coalition is an int bitmask: bit p set means player p is a member.
That keeps coalition algebra allocation-free and makes exhaustive
enumeration (masks 0 .. 2**n - 1) trivial.
"""

import threading
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import _backend
from .rng import Stream

Coalition = int


def empty_coalition() -> Coalition:
    return 0


def full_coalition(n: int) -> Coalition:
    return (1 << n) - 1


def coalition_of(members) -> Coalition:
    mask = 0
    for p in members:
        mask |= 1 << p
    return mask


def coalition_size(mask: Coalition) -> int:
    return mask.bit_count()


def contains(mask: Coalition, i: int) -> bool:
    return bool((mask >> i) & 1)


def with_member(mask: Coalition, i: int) -> Coalition:
    return mask | (1 << i)


def without_member(mask: Coalition, i: int) -> Coalition:
    return mask & ~(1 << i)


def iter_members(mask: Coalition) -> Iterator[int]:
    """Yield member ids in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class ValueOracle:
    """Base class for cooperative-game value functions.

    Subclasses implement evaluate(); everything else goes through
    value(), which maintains a thread-safe evaluation counter.  Code
    that evaluates coalitions inside compiled kernels reports those
    evaluations afterwards via tally().
    """

    def __init__(self, n_players: int):
        if n_players < 1:
            raise ValueError(f"need at least one player, got {n_players}")
        self.n_players = n_players
        self._evals = 0
        self._lock = threading.Lock()

    def evaluate(self, coalition: Coalition) -> float:
        raise NotImplementedError

    def value(self, coalition: Coalition) -> float:
        if coalition < 0 or coalition >> self.n_players:
            raise ValueError(f"coalition {coalition:#x} out of range for "
                             f"{self.n_players} players")
        self.tally(1)
        return self.evaluate(coalition)

    def tally(self, k: int) -> None:
        with self._lock:
            self._evals += k

    @property
    def eval_count(self) -> int:
        with self._lock:
            return self._evals


class CachedOracle(ValueOracle):
    """LRU memo over an inner oracle.  The coalition bitmask is already a
    canonical encoding, so member order can't split cache entries.
    eval_count reports the inner oracle's true evaluations: cache hits
    leave it unchanged."""

    def __init__(self, inner: ValueOracle, maxsize: int = 1 << 20):
        super().__init__(inner.n_players)
        if maxsize < 1:
            raise ValueError("maxsize must be positive")
        self.inner = inner
        self.maxsize = maxsize
        self._cache: OrderedDict[int, float] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def value(self, coalition: Coalition) -> float:
        if coalition < 0 or coalition >> self.n_players:
            raise ValueError(f"coalition {coalition:#x} out of range for "
                             f"{self.n_players} players")
        with self._lock:
            if coalition in self._cache:
                self._cache.move_to_end(coalition)
                self.hits += 1
                return self._cache[coalition]
            self.misses += 1
        v = self.inner.value(coalition)
        with self._lock:
            self._cache[coalition] = v
            if len(self._cache) > self.maxsize:
                self._cache.popitem(last=False)
        return v

    def evaluate(self, coalition: Coalition) -> float:
        return self.inner.evaluate(coalition)

    def tally(self, k: int) -> None:
        self.inner.tally(k)

    @property
    def eval_count(self) -> int:
        return self.inner.eval_count


def marginal_contribution(oracle: ValueOracle, i: int, coalition: Coalition) -> float:
    """v(S + i) - v(S).  S must not already contain i."""
    if not 0 <= i < oracle.n_players:
        raise ValueError(f"player {i} out of range")
    if contains(coalition, i):
        raise ValueError(f"player {i} already in coalition {coalition:#x}")
    return oracle.value(with_member(coalition, i)) - oracle.value(coalition)


def sample_coalition_of_size(n: int, i: int, j: int, stream: Stream) -> Coalition:
    """Uniform random coalition of size j drawn from the n players minus i.

    Consumes exactly j draws from the stream, matching the in-kernel
    subset draw, so generic and fused sampling stay in lockstep.
    """
    if not 0 <= i < n:
        raise ValueError(f"player {i} out of range")
    if not 0 <= j <= n - 1:
        raise ValueError(f"stratum {j} out of range for n={n}")
    cands = np.empty(n - 1, np.int64)
    idx = 0
    for p in range(n):
        if p != i:
            cands[idx] = p
            idx += 1
    K = _backend.active()
    with _backend.errstate():
        s = K.draw_subset(np.uint64(stream.state), cands, j)
    stream.set_state(int(s))
    mask = 0
    for k in range(j):
        mask |= 1 << int(cands[k])
    return mask
