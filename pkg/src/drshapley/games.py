"""Demand-response example games and their data plumbing.

Two value functions:

* ReserveGame -- a pool of curtailable loads sells reserve capacity; a
  coalition's value is the (negative) penalty on curtailment beyond the
  procured margin.
* LoadFollowGame -- deferrable loads try to track a target consumption
  profile; members commit greedily, each choosing its best shift delay
  against the residual target.

Both have fused sampling kernels in _kernels.py; the evaluate() methods
here perform the identical arithmetic (same summation order, same
branch shapes) so generic and fused estimates agree to the bit.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import Coalition, ValueOracle, iter_members
from .rng import STREAM_GEN, Stream, derive

HORIZON = 24


class GameDataError(ValueError):
    """Malformed game input (CSV rows, inconsistent shapes, bad ranges)."""


class ReserveGame(ValueOracle):
    """Reserve-shortfall penalty game.

    v(S) = -q * max(sum_{i in S} delta_x[i] - delta_m, 0): coalitions
    whose total curtailment stays within the margin delta_m are worth 0,
    anything beyond is penalized linearly at rate q.  All marginals are
    therefore in [-q * delta_x[i], 0].
    """

    kind = "reserve"

    def __init__(self, delta_x, delta_m: float, q: float = 1.0):
        dx = np.ascontiguousarray(delta_x, dtype=np.float64)
        if dx.ndim != 1:
            raise GameDataError("delta_x must be one-dimensional")
        super().__init__(dx.shape[0])
        if not np.all(np.isfinite(dx)) or np.any(dx < 0):
            raise GameDataError("curtailment amounts must be finite and >= 0")
        if not np.isfinite(delta_m) or delta_m < 0:
            raise GameDataError(f"margin must be finite and >= 0, got {delta_m}")
        if not np.isfinite(q) or q <= 0:
            raise GameDataError(f"penalty rate must be positive, got {q}")
        self.delta_x = dx
        self.delta_m = float(delta_m)
        self.q = float(q)

    def evaluate(self, coalition: Coalition) -> float:
        tot = 0.0
        for p in iter_members(coalition):
            tot += self.delta_x[p]
        exc = tot - self.delta_m
        # branch mirrors the kernel exactly, incl. avoiding -0.0
        return float(-self.q * exc) if exc > 0.0 else 0.0


def _greedy_reference(demands, max_delays, target, members):
    # plain-Python twin of _kernels.greedy_value, used by the optional
    # self-check; must stay operation-for-operation identical
    T = len(target)
    agg = [0.0] * T
    delays = []
    for p in members:
        best_d = 0
        best_ssd = float("inf")
        for d in range(int(max_delays[p]) + 1):
            ssd = 0.0
            for t in range(T):
                r = target[t] - agg[t]
                if t >= d:
                    r -= demands[p, t - d]
                ssd += r * r
            if ssd < best_ssd:
                best_ssd = ssd
                best_d = d
        delays.append(best_d)
        for t in range(best_d, T):
            agg[t] += demands[p, t - best_d]
    y2 = 0.0
    ssd = 0.0
    for t in range(T):
        y2 += target[t] * target[t]
        r = target[t] - agg[t]
        ssd += r * r
    return (y2 - ssd) / T, agg, delays


class LoadFollowGame(ValueOracle):
    """Deferrable-load target-following game.

    Each player i has an hourly demand profile demands[i] and may delay
    it by d in {0, .., max_delays[i]} whole hours; delayed energy that
    slides past the end of the horizon is dropped.  A coalition's
    members commit in ascending id order, each picking the delay that
    minimizes the squared gap to what remains of the target (ties go to
    the smaller delay).  v(S) = (|y|^2 - |y - s|^2) / T where s is the
    committed aggregate, so v(empty) = 0 and v is bounded above by
    |y|^2 / T.

    Set DRSHAPLEY_CHECK_GREEDY=1 to re-run every evaluation through a
    plain-Python reference and assert bitwise agreement (slow).
    """

    kind = "loadfollow"

    def __init__(self, demands, max_delays, target):
        dem = np.ascontiguousarray(demands, dtype=np.float64)
        if dem.ndim != 2:
            raise GameDataError("demands must be (n_players, horizon)")
        super().__init__(dem.shape[0])
        T = dem.shape[1]
        md = np.ascontiguousarray(max_delays, dtype=np.int64)
        tgt = np.ascontiguousarray(target, dtype=np.float64)
        if md.shape != (dem.shape[0],):
            raise GameDataError("max_delays must have one entry per player")
        if tgt.shape != (T,):
            raise GameDataError(f"target must have length {T}")
        if not np.all(np.isfinite(dem)) or np.any(dem < 0):
            raise GameDataError("demands must be finite and >= 0")
        if np.any(md < 0) or np.any(md >= T):
            raise GameDataError(f"max delays must lie in [0, {T - 1}]")
        if not np.all(np.isfinite(tgt)):
            raise GameDataError("target profile must be finite")
        self.demands = dem
        self.max_delays = md
        self.target = tgt
        self.horizon = T
        self._check = os.environ.get("DRSHAPLEY_CHECK_GREEDY", "") == "1"

    def evaluate(self, coalition: Coalition) -> float:
        m = coalition.bit_count()
        members = np.fromiter(iter_members(coalition), np.int64, m)
        agg = np.empty(self.horizon, np.float64)
        K = _backend.active()
        v = float(K.greedy_value(self.demands, self.max_delays, self.target,
                                 members, m, agg))
        if self._check:
            ref, _, _ = _greedy_reference(self.demands, self.max_delays,
                                          self.target, members)
            assert ref == v, f"greedy kernel mismatch: {v!r} != {ref!r}"
        return v


def greedy_schedule(game: LoadFollowGame, coalition: Coalition):
    """Commit the coalition greedily and return (aggregate, delays, value).

    Same walk as evaluate(), but exposes the chosen delays and the
    committed aggregate profile.
    """
    m = coalition.bit_count()
    members = np.fromiter(iter_members(coalition), np.int64, m)
    v, agg, delays = _greedy_reference(game.demands, game.max_delays,
                                       game.target, members)
    game.tally(1)
    return np.asarray(agg, np.float64), list(delays), float(v)


# ---------------------------------------------------------------------------
# synthetic instances


def generate_reserve_game(n: int, seed: int, dx_low: float = 0.7,
                          dx_high: float = 0.8, delta_m: float = None,
                          margin_frac: float = 0.5, q: float = 1.0) -> ReserveGame:
    """Random reserve game: curtailments uniform in [dx_low, dx_high].

    When delta_m is not given it defaults to margin_frac times the total
    curtailment; at the default 0.5 roughly half the strata sit below
    the margin (zero mean and zero sigma), which is the regime where
    adaptive allocation pays off.
    """
    if n < 1:
        raise GameDataError("n must be >= 1")
    if not 0 <= dx_low <= dx_high:
        raise GameDataError("need 0 <= dx_low <= dx_high")
    st = Stream(derive(seed, STREAM_GEN, 1))
    dx = np.empty(n, np.float64)
    for i in range(n):
        dx[i] = dx_low + (dx_high - dx_low) * st.double()
    if delta_m is None:
        delta_m = margin_frac * float(np.sum(dx))
    return ReserveGame(dx, delta_m, q)


def _shift_truncate(x: np.ndarray, d: int) -> np.ndarray:
    T = x.shape[0]
    y = np.zeros(T, np.float64)
    if d < T:
        y[d:] = x[: T - d]
    return y


def generate_load_profiles(n: int, seed: int, horizon: int = HORIZON,
                           max_delay_high: int = 6):
    """Synthetic deferrable loads: rectangular blocks (a few hours wide,
    occasionally two humps) with random magnitude, plus a per-load
    maximum delay.  Returns (demands, max_delays)."""
    if n < 1:
        raise GameDataError("n must be >= 1")
    if horizon < 8:
        raise GameDataError("horizon too short for the block shapes")
    st = Stream(derive(seed, STREAM_GEN, 2))
    demands = np.zeros((n, horizon), np.float64)
    max_delays = np.empty(n, np.int64)
    for i in range(n):
        mag = 0.5 + 1.5 * st.double()
        dur = 2 + st.below(4)
        start = st.below(horizon - dur - max_delay_high)
        demands[i, start:start + dur] = mag
        if st.below(4) == 0:
            # second, smaller hump later in the day
            dur2 = 1 + st.below(2)
            lo = min(start + dur + 2, horizon - dur2 - 1)
            start2 = lo + st.below(max(horizon - dur2 - lo, 1))
            demands[i, start2:start2 + dur2] += 0.5 * mag
        max_delays[i] = st.below(max_delay_high + 1)
    return demands, max_delays


def generate_load_follow_game(n: int, seed: int, horizon: int = HORIZON,
                              max_delay_high: int = 6) -> LoadFollowGame:
    """Synthetic target-following instance.  The target is the aggregate
    of the same loads after independent random admissible delays, so it
    is reachable in principle and every stratum has real signal."""
    demands, max_delays = generate_load_profiles(n, seed, horizon,
                                                 max_delay_high)
    target = derive_target(demands, max_delays, seed)
    return LoadFollowGame(demands, max_delays, target)


def derive_target(demands, max_delays, seed: int) -> np.ndarray:
    """Aggregate of independently re-delayed copies of the given loads;
    the delay for load i is uniform on {0, .., max_delays[i]}."""
    st = Stream(derive(seed, STREAM_GEN, 3))
    n, T = demands.shape
    target = np.zeros(T, np.float64)
    for i in range(n):
        d = st.below(int(max_delays[i]) + 1)
        target += _shift_truncate(demands[i], d)
    return target


# ---------------------------------------------------------------------------
# CSV ingestion

@dataclass
class LoadProfile:
    """One deferrable load: hourly demand plus its maximum delay."""
    id: int
    demand: np.ndarray
    max_delay: int


def _parse_float(raw: str, line_no: int, field: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise GameDataError(
            f"line {line_no}: field {field!r} is not a number: {raw!r}") from None


def _parse_id(raw: str, line_no: int, seen: dict) -> int:
    txt = raw.strip()
    try:
        pid = int(txt)
    except ValueError:
        raise GameDataError(
            f"line {line_no}: field 'id' must be an unsigned integer, "
            f"got {txt!r}") from None
    if pid < 0:
        raise GameDataError(
            f"line {line_no}: field 'id' must be an unsigned integer, "
            f"got {pid}")
    if pid in seen:
        raise GameDataError(
            f"line {line_no}: duplicate id {pid} (first on line {seen[pid]})")
    seen[pid] = line_no
    return pid


def _looks_like_header(row) -> bool:
    try:
        float(row[0])
        return False
    except (ValueError, IndexError):
        return True


def ingest_load_csv(path) -> list:
    """Read deferrable-load rows `id,h0,..,h23,max_delay` into LoadProfile
    records, sorted by id.  The header line is optional (detected by a
    non-numeric first field).  An empty file gives an empty list."""
    profiles = []
    seen: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (line_no == 1 and _looks_like_header(row)):
                continue
            if len(row) != HORIZON + 2:
                raise GameDataError(
                    f"line {line_no}: expected {HORIZON + 2} fields "
                    f"(id,h0..h{HORIZON - 1},max_delay), got {len(row)}")
            pid = _parse_id(row[0], line_no, seen)
            dem = np.empty(HORIZON, np.float64)
            for h in range(HORIZON):
                val = _parse_float(row[1 + h], line_no, f"h{h}")
                if not np.isfinite(val) or val < 0:
                    raise GameDataError(
                        f"line {line_no}: field 'h{h}' must be finite and "
                        f">= 0, got {row[1 + h]!r}")
                dem[h] = val
            raw_d = row[HORIZON + 1].strip()
            try:
                d = int(raw_d)
            except ValueError:
                raise GameDataError(
                    f"line {line_no}: field 'max_delay' is not an integer: "
                    f"{raw_d!r}") from None
            if not 0 <= d < HORIZON:
                raise GameDataError(
                    f"line {line_no}: field 'max_delay' must lie in "
                    f"[0, {HORIZON - 1}], got {d}")
            profiles.append(LoadProfile(pid, dem, d))
    profiles.sort(key=lambda p: p.id)
    return profiles


def load_follow_from_profiles(profiles, target=None, seed: int = 0) -> LoadFollowGame:
    """Build the game from LoadProfile records.  Without an explicit
    target, one is derived by re-delaying the same loads at random
    (seeded), mirroring the synthetic generator."""
    if not profiles:
        raise GameDataError("need at least one load profile")
    demands = np.stack([p.demand for p in profiles])
    max_delays = np.array([p.max_delay for p in profiles], np.int64)
    if target is None:
        target = derive_target(demands, max_delays, seed)
    return LoadFollowGame(demands, max_delays, target)


def read_reserve_csv(path):
    """Read reserve-game rows `id,delta_x`, sorted by id.  Returns
    (ids, delta_x); an empty file gives empty results."""
    rows = []
    seen: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (line_no == 1 and _looks_like_header(row)):
                continue
            if len(row) != 2:
                raise GameDataError(
                    f"line {line_no}: expected 2 fields (id,delta_x), "
                    f"got {len(row)}")
            pid = _parse_id(row[0], line_no, seen)
            dx = _parse_float(row[1], line_no, "delta_x")
            if not np.isfinite(dx) or dx < 0:
                raise GameDataError(
                    f"line {line_no}: field 'delta_x' must be finite and "
                    f">= 0, got {row[1]!r}")
            rows.append((pid, dx))
    rows.sort(key=lambda r: r[0])
    ids = [r[0] for r in rows]
    delta_x = np.array([r[1] for r in rows], np.float64)
    return ids, delta_x


def write_load_csv(path, demands, max_delays, ids=None) -> None:
    n, T = demands.shape
    if ids is None:
        ids = list(range(n))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"h{h}" for h in range(T)] + ["max_delay"])
        for i in range(n):
            writer.writerow([ids[i]] + [repr(float(x)) for x in demands[i]]
                            + [int(max_delays[i])])
