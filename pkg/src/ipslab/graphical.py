"""Graphical construction: per-clock Poisson streams, merged events, path reachability.

Every clock (a lambda-arrow, a delta-arrow or a recovery mark at a site) owns an
independent Poisson stream derived from ``(seed, clock id)`` by a keyed
counter-based generator, so any process driven by a :class:`Construction` sees
the same realization no matter which sites it happens to explore.
"""
from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class ParameterError(ValueError):
    pass


class HorizonExceeded(ValueError):
    pass


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _zigzag(x: int) -> int:
    return (x << 1) if x >= 0 else ((-x << 1) - 1)


def derive_seed(master: int, *parts: int) -> int:
    """Splittable derivation: child seeds never depend on sibling count."""
    z = mix64(master & MASK64)
    for p in parts:
        z = mix64(z ^ _zigzag(int(p)))
    return z


class ClockKind(IntEnum):
    LAMBDA = 0
    DELTA = 1
    RECOVERY = 2


LAMBDA, DELTA, RECOVERY = 0, 1, 2


class ClockId(NamedTuple):
    kind: int
    source: int
    target: int  # equals source for recovery clocks

    @classmethod
    def recovery(cls, x: int) -> "ClockId":
        return cls(RECOVERY, x, x)


class EventMark(NamedTuple):
    time: float
    clock: ClockId
    index: int  # 1-based position within the clock's stream

    def sort_key(self):
        return (self.time, self.clock.kind, self.clock.source, self.clock.target)


_KIND_SALT = (0x243F6A8885A308D3, 0x13198A2E03707344, 0xA4093822299F31D0)


def _seed_salts(seed: int) -> Tuple[int, int, int]:
    return tuple(mix64((seed & MASK64) ^ s) for s in _KIND_SALT)


def _key_from_salts(salts, clock) -> int:
    kind, src, tgt = clock
    return mix64(salts[kind] ^ ((_zigzag(src) << 32) | _zigzag(tgt)) & MASK64)


def clock_key(seed: int, clock: Tuple[int, int, int]) -> int:
    return _key_from_salts(_seed_salts(seed), clock)


_INV53 = 1.0 / 9007199254740992.0
_BLOCK_STRIDE = 1 << 24  # counters reserved per unit-time block


def _uniform(key: int, n: int) -> float:
    """The n-th uniform in [0, 1) of the stream with the given key."""
    z = (key + (n + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return (z >> 11) * _INV53


@lru_cache(maxsize=256)
def poisson_cdf(rate: float) -> Tuple[float, ...]:
    """Cumulative Poisson(rate) probabilities up to the float saturation point."""
    p = math.exp(-rate)
    cum = p
    out = [cum]
    k = 0
    while cum < 1.0 and (k < rate or p > 0.0) and k < 100000:
        k += 1
        p *= rate / k
        if cum + p == cum and k > rate:
            break
        cum += p
        out.append(cum)
    out[-1] = 1.0
    return tuple(out)


def block_width(rate: float) -> float:
    """Time length of one stream block: 1, or a power of two holding about one event at low rates."""
    if rate >= 1.0 or rate <= 0.0:
        return 1.0
    return 2.0 ** math.ceil(math.log2(1.0 / rate))


def _block_times(key: int, cdf: Tuple[float, ...], b: int, w: float = 1.0) -> Tuple[float, ...]:
    # Poisson count by inversion of a cached cdf, then sorted uniform positions in [b w, (b+1) w)
    base = (key + (b * _BLOCK_STRIDE + 1) * GOLDEN) & MASK64
    z = ((base ^ (base >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    u = ((z ^ (z >> 31)) >> 11) * _INV53
    if u <= cdf[0]:
        return ()
    k = bisect.bisect_left(cdf, u)
    pos = []
    for i in range(1, k + 1):
        z = (base + i * GOLDEN) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        pos.append((b + ((z ^ (z >> 31)) >> 11) * _INV53) * w)
    pos.sort()
    if b == 0 and pos[0] == 0.0:
        pos = [x for x in pos if x > 0.0]
    return tuple(pos)


def _stream_from_key(key: int, rate: float, t_max: float) -> List[float]:
    out: List[float] = []
    if rate == 0.0:
        return out
    w = block_width(rate)
    cdf = poisson_cdf(rate * w)
    for b in range(int(math.ceil(t_max / w)) + 1):
        for x in _block_times(key, cdf, b, w):
            if x > t_max:
                return out
            out.append(x)
    return out


def stream_times(seed: int, clock: Tuple[int, int, int], rate: float, t_max: float) -> List[float]:
    """All event times in (0, t_max] of the Poisson clock ``clock``.

    Each time block (unit length, longer at low rates) draws its own Poisson
    count and positions from a counter keyed by ``(seed, clock, block)``, so
    the stream is independent of ``t_max`` and can be entered at any time
    without replaying the past.
    """
    if not (rate >= 0 and t_max >= 0) or math.isinf(rate):
        raise ParameterError(f"rate and t_max must be nonnegative (got {rate}, {t_max})")
    return _stream_from_key(clock_key(seed, clock), float(rate), float(t_max))


@dataclass(eq=False)
class Construction:
    """One realization of the graphical construction up to ``horizon``.

    ``lambda_rate`` drives arrows that flip both -1 and 0 to 1, ``delta_rate``
    drives arrows that flip only ``delta_target`` (0 when mu > lambda, -1 when
    lambda > mu).  Streams are materialized lazily and cached.
    """

    seed: int
    lambda_rate: float
    delta_rate: float = 0.0
    horizon: float = 100.0
    M: int = 1
    recovery_rate: float = 1.0
    delta_target: int = 0
    _script: Optional[Dict[Tuple[int, int, int], List[float]]] = field(default=None, repr=False)
    _cache: Dict[Tuple[int, int, int], List[float]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if min(self.lambda_rate, self.delta_rate, self.recovery_rate) < 0:
            raise ParameterError("rates must be nonnegative")
        if self.horizon < 0:
            raise ParameterError("horizon must be nonnegative")
        if self.M < 1:
            raise ParameterError("range M must be >= 1")
        if self.delta_target not in (0, -1):
            raise ParameterError("delta_target must be 0 or -1")
        self.seed = int(self.seed) & MASK64
        self._salts = _seed_salts(self.seed)
        self._rates = (self.lambda_rate, self.delta_rate, self.recovery_rate)
        self._widths = tuple(block_width(r) for r in self._rates)
        self._cdfs = tuple(poisson_cdf(r * w) if r > 0 else None for r, w in zip(self._rates, self._widths))
        self._keys: Dict[Tuple[int, int, int], int] = {}
        self._blocks: Dict[Tuple[int, int], Tuple[float, ...]] = {}
        self._last = tuple(int(math.ceil(self.horizon / w)) for w in self._widths)

    @classmethod
    def for_params(cls, seed: int, lam: float, mu: float, horizon: float, M: int = 1) -> "Construction":
        """Stream decomposition for a three-state process with parameters (lam, mu)."""
        if lam < 0 or mu < 0:
            raise ParameterError("lambda and mu must be nonnegative")
        if mu >= lam:
            return cls(seed, lam, mu - lam, horizon, M, delta_target=0)
        return cls(seed, mu, lam - mu, horizon, M, delta_target=-1)

    @classmethod
    def scripted(cls, marks: Iterable[Tuple[float, int, int, int]], horizon: float, M: int = 1,
                 delta_target: int = 0) -> "Construction":
        """A construction whose only marks are the given ``(time, kind, source, target)``."""
        script: Dict[Tuple[int, int, int], List[float]] = {}
        for t, kind, src, tgt in marks:
            if kind == RECOVERY:
                tgt = src
            if not 0 < t <= horizon:
                raise ParameterError(f"scripted mark at {t} outside (0, {horizon}]")
            script.setdefault((int(kind), int(src), int(tgt)), []).append(float(t))
        for v in script.values():
            v.sort()
        return cls(0, 1.0, 1.0, horizon, M, delta_target=delta_target, _script=script)

    def rate(self, kind: int) -> float:
        return self._rates[kind]

    def times(self, clock: Tuple[int, int, int]) -> List[float]:
        """Sorted event times of ``clock`` in (0, horizon]; do not mutate."""
        cached = self._cache.get(clock)
        if cached is not None:
            return cached
        if self._script is not None:
            out = self._script.get(tuple(clock), [])
        else:
            out = _stream_from_key(_key_from_salts(self._salts, clock), self._rates[clock[0]], self.horizon)
        self._cache[clock] = out
        return out

    def next_time(self, clock: Tuple[int, int, int], after: float) -> float:
        """First event of ``clock`` strictly after ``after``; ``inf`` past the horizon."""
        if self._script is not None:
            ts = self._script.get(clock, ())
            i = bisect.bisect_right(ts, after)
            return ts[i] if i < len(ts) else math.inf
        cdf = self._cdfs[clock[0]]
        if cdf is None:
            return math.inf
        key = self._keys.get(clock)
        if key is None:
            key = self._keys[clock] = _key_from_salts(self._salts, clock)
        blocks = self._blocks
        kind = clock[0]
        w = self._widths[kind]
        b = int(after / w) if after > 0 else 0
        last = self._last[kind]
        while b <= last:
            bk = (key, b)
            blk = blocks.get(bk)
            if blk is None:
                blk = blocks[bk] = _block_times(key, cdf, b, w)
            for x in blk:
                if x > after:
                    return x if x <= self.horizon else math.inf
            b += 1
        return math.inf

    def arrow_kinds(self, arrows: str = "both") -> Tuple[int, ...]:
        kinds = []
        if self._script is not None or self.lambda_rate > 0:
            kinds.append(LAMBDA)
        if arrows == "both" and (self._script is not None or self.delta_rate > 0):
            kinds.append(DELTA)
        return tuple(kinds)

    def out_clocks(self, x: int, arrows: str = "both") -> List[Tuple[int, int, int]]:
        out = []
        for kind in self.arrow_kinds(arrows):
            for d in range(1, self.M + 1):
                out.append((kind, x, x - d))
                out.append((kind, x, x + d))
        return out

    def block_count(self) -> int:
        """Number of (clock, unit block) pieces generated so far."""
        return len(self._blocks)


def _check_window(c: Construction, t0: float, t1: float) -> None:
    if t1 > c.horizon:
        raise HorizonExceeded(f"t={t1} exceeds construction horizon {c.horizon}")
    if t0 > t1:
        raise ParameterError("t0 must not exceed t1")


def merged_events(c: Construction, sites: Tuple[int, int], t0: float, t1: float) -> List[EventMark]:
    """Marks with time in (t0, t1] whose source or target lies in ``[lo, hi]``."""
    _check_window(c, t0, t1)
    lo, hi = sites
    if hi < lo:
        return []
    clocks = set()
    kinds = c.arrow_kinds("both")
    for x in range(lo, hi + 1):
        clocks.add((RECOVERY, x, x))
        for kind in kinds:
            for d in range(1, c.M + 1):
                for y in (x - d, x + d):
                    clocks.add((int(kind), x, y))
                    clocks.add((int(kind), y, x))
    marks = []
    for clock in clocks:
        ts = c.times(clock)
        i = bisect.bisect_right(ts, t0)
        j = bisect.bisect_right(ts, t1)
        cid = ClockId(*clock)
        for n in range(i, j):
            marks.append(EventMark(ts[n], cid, n + 1))
    marks.sort(key=EventMark.sort_key)
    return marks


def reachable(c: Construction, A: Iterable[int], s: float, t: float, arrows: str = "both") -> frozenset:
    """Sites y with a path from ``A x s`` to ``y x t``.

    Paths follow permitted arrows forward in time and die at recovery marks.
    ``arrows`` is ``"both"`` (contact process at the total arrow rate) or
    ``"lambda"`` (lambda-arrows only).
    """
    if arrows not in ("both", "lambda"):
        raise ParameterError(f"unknown arrow selection {arrows!r}")
    _check_window(c, s, t)
    cur = set(int(a) for a in A)
    heap: list = []
    armed: set = set()
    nxt = c.next_time
    clocks_of = {}

    def activate(x, now):
        cl = clocks_of.get(x)
        if cl is None:
            cl = clocks_of[x] = [(RECOVERY, x, x)] + c.out_clocks(x, arrows)
        for clock in cl:
            if clock not in armed:
                tn = nxt(clock, now)
                if tn <= t:
                    heapq.heappush(heap, (tn,) + clock)
                    armed.add(clock)

    for x in sorted(cur):
        activate(x, s)
    # a queued clock stays armed until it fires while its source is off every path
    while heap:
        time, kind, src, tgt = item = heapq.heappop(heap)
        clock = item[1:]
        if src not in cur or kind == RECOVERY:
            armed.discard(clock)
            cur.discard(src)
            continue
        tn = nxt(clock, time)
        if tn <= t:
            heapq.heappush(heap, (tn,) + clock)
        else:
            armed.discard(clock)
        if tgt not in cur:
            cur.add(tgt)
            activate(tgt, time)
    return frozenset(cur)
