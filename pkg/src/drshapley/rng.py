"""Deterministic random streams (SplitMix64).

Every stochastic component takes an explicit stream so results are
reproducible bit-for-bit across runs, thread counts, and backends.
Streams for sub-tasks are derived, never split by jumping the counter:
see derive() for why.
"""

import numpy as np

from . import _backend

# Purpose tags for derived streams.  Keeping them in one table avoids
# accidental collisions between components.
STREAM_ESTIMATE = 11
STREAM_PILOT = 12
STREAM_REP = 13
STREAM_GEN = 14
STREAM_TRUTH = 15


def derive(seed: int, *keys: int) -> int:
    """Fold keys into seed, one at a time, through the mix finalizer.

    Each application is a full avalanche, so streams for (seed, a) and
    (seed, b) are decorrelated even for adjacent a, b; affine counter
    jumps would not give that.
    """
    K = _backend.active()
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with _backend.errstate():
        for k in keys:
            # jitted kernels hand uint64 back as a plain int; rewrap
            s = np.uint64(K.derive_seed(s, np.uint64(k & 0xFFFFFFFFFFFFFFFF)))
    return int(s)


class Stream:
    """Stateful wrapper over the uint64 counter RNG.

    Only convenience code uses this class; hot loops thread the raw
    state through the kernels directly.
    """

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        self._s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    @property
    def state(self) -> int:
        return int(self._s)

    def set_state(self, s: int) -> None:
        self._s = np.uint64(s & 0xFFFFFFFFFFFFFFFF)

    def u64(self) -> int:
        K = _backend.active()
        with _backend.errstate():
            s, z = K.rng_u64(self._s)
        self._s = np.uint64(s)
        return int(z)

    def double(self) -> float:
        K = _backend.active()
        with _backend.errstate():
            s, u = K.rng_double(self._s)
        self._s = np.uint64(s)
        return float(u)

    def below(self, m: int) -> int:
        if m <= 0:
            raise ValueError("below() needs m > 0")
        K = _backend.active()
        with _backend.errstate():
            s, r = K.rng_below(self._s, m)
        self._s = np.uint64(s)
        return int(r)

    def child(self, *keys: int) -> "Stream":
        return Stream(derive(self.state, *keys))
