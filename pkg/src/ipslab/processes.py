"""Three-state contact process, contact process, range-M contact process and
forest fire cluster, all driven by a shared :class:`Construction`.

The workhorse is :class:`Run`, an event-driven simulator that only schedules
the clocks of currently infected sites.  Several runs on one construction can
be stepped together in global time order (see :func:`co_step`), which is how
the coupling checks observe every event time of every process.

Half-line and all-infected starts cannot be simulated directly.  They are
handled with a two-sided envelope: a *lower* run in which the unbounded
infected region is cut to a finite window and everything beyond it is
removed, and an *upper* run in which everything beyond the window is held
infected forever.  For mu >= lambda both runs sandwich the true process, so
wherever they agree the true process is known exactly.  The window is doubled
until the quantity of interest is certified.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .graphical import (DELTA, LAMBDA, RECOVERY, Construction, HorizonExceeded,
                        ParameterError)

INF = math.inf
STATES = (-1, 0, 1)


class ConfigurationError(ValueError):
    pass


class UnsupportedError(ValueError):
    pass


class CertificationError(RuntimeError):
    """The envelope window could not be made wide enough."""


@dataclass(frozen=True)
class ProcessParams:
    lam: float
    mu: float
    M: int = 1

    def __post_init__(self):
        if not (self.lam >= 0 and self.mu >= 0) or math.isinf(self.lam) or math.isinf(self.mu):
            raise ParameterError(f"rates must be finite and nonnegative, got {self.lam}, {self.mu}")
        if int(self.M) != self.M or self.M < 1:
            raise ParameterError("range M must be a positive integer")

    def construction(self, seed: int, horizon: float) -> Construction:
        return Construction.for_params(seed, self.lam, self.mu, horizon, self.M)


@dataclass(frozen=True)
class Configuration:
    """Finite window of explicit states plus constant states on either side.

    ``left_default`` applies to sites below the smallest window key and
    ``right_default`` to sites above the largest one.
    """

    window: Mapping[int, int]
    left_default: int = -1
    right_default: int = -1

    def __post_init__(self):
        w = {int(k): int(v) for k, v in dict(self.window).items()}
        for v in list(w.values()) + [self.left_default, self.right_default]:
            if v not in STATES:
                raise ConfigurationError(f"state {v} not in {{-1, 0, 1}}")
        if not w and self.left_default != self.right_default:
            raise ConfigurationError("an empty window needs equal defaults")
        object.__setattr__(self, "window", w)

    @classmethod
    def standard(cls, x: int = 0) -> "Configuration":
        """Site ``x`` infected, every other site never infected (eta_x)."""
        return cls({x: 1})

    eta_k = standard

    @classmethod
    def eta_bar(cls, k: int = 0) -> "Configuration":
        """Sites ``<= k`` infected, sites above never infected."""
        return cls({k: 1}, left_default=1, right_default=-1)

    @classmethod
    def all_infected(cls) -> "Configuration":
        return cls({0: 1}, 1, 1)

    @classmethod
    def from_sets(cls, infected: Iterable[int], zeros: Iterable[int] = (), default: int = -1) -> "Configuration":
        w = {int(x): 0 for x in zeros}
        for x in infected:
            w[int(x)] = 1
        if not w:
            w = {0: default}
        return cls(w, default, default)

    @property
    def lo(self) -> int:
        return min(self.window) if self.window else 0

    @property
    def hi(self) -> int:
        return max(self.window) if self.window else 0

    def value(self, x: int) -> int:
        v = self.window.get(x)
        if v is not None:
            return v
        if not self.window:
            return self.left_default
        return self.left_default if x < self.lo else self.right_default

    def finite_support(self) -> bool:
        return self.left_default != 1 and self.right_default != 1

    def infected(self) -> frozenset:
        if not self.finite_support():
            raise ConfigurationError("infinitely many infected sites")
        return frozenset(x for x, v in self.window.items() if v == 1)

    def translate(self, y: int) -> "Configuration":
        """The configuration shifted right by ``y``."""
        return Configuration({x + y: v for x, v in self.window.items()}, self.left_default, self.right_default)

    def __le__(self, other: "Configuration") -> bool:
        if self.left_default > other.left_default or self.right_default > other.right_default:
            return False
        sites = set(self.window) | set(other.window)
        if sites:
            lo, hi = min(sites), max(sites)
            return all(self.value(x) <= other.value(x) for x in range(lo - 1, hi + 2))
        return True


@dataclass
class Trajectory:
    """Summaries ``(time, r, l, size)`` after every state change.

    An empty infected set has ``r = -inf`` and ``l = +inf``; an unbounded
    one reports ``inf`` for the unbounded side and for ``size``.
    """

    samples: List[Tuple[float, float, float, float]]
    snapshots: Dict[float, Configuration] = field(default_factory=dict)
    died_at: Optional[float] = None
    ever_infected: frozenset = frozenset()
    t_end: float = 0.0

    def at(self, t: float) -> Tuple[float, float, float, float]:
        """Summary in force at time ``t`` (right-continuous)."""
        lo, hi = 0, len(self.samples)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.samples[mid][0] <= t:
                lo = mid + 1
            else:
                hi = mid
        if lo == 0:
            raise ValueError(f"time {t} precedes the trajectory")
        return self.samples[lo - 1]

    def r(self, t: float) -> float:
        return self.at(t)[1]

    def max_r(self) -> float:
        return max(s[1] for s in self.samples)

    def alive_at(self, t: float) -> bool:
        return self.died_at is None or self.died_at > t


class Run:
    """Event-driven simulation of one process on a construction.

    ``contact=True`` gives the set-valued contact process (states 1 and 0
    only, every arrow kind that reinfects a 0 is used).  ``clamp`` holds the
    sites beyond ``(a, b)`` (``x < a`` / ``x > b``) infected forever and
    ``block`` removes them from the graph altogether.
    """

    def __init__(self, c: Construction, eta: Configuration, t0: float = 0.0, t_end: Optional[float] = None,
                 contact: bool = False, clamp: Tuple[Optional[int], Optional[int]] = (None, None),
                 block: Tuple[Optional[int], Optional[int]] = (None, None),
                 snap_times: Sequence[float] = (), record: bool = True, log: bool = False):
        t_end = c.horizon if t_end is None else t_end
        if t_end > c.horizon:
            raise HorizonExceeded(f"t={t_end} exceeds construction horizon {c.horizon}")
        if t0 > t_end:
            raise ParameterError("start time after end time")
        self.c = c
        self.contact = contact
        self.t = t0
        self.t_end = t_end
        self.M = c.M
        self.clamp_lo, self.clamp_hi = clamp
        self.block_lo, self.block_hi = block
        self.ld = eta.left_default
        self.rd = eta.right_default
        self.wlo, self.whi = eta.lo, eta.hi
        if (self.ld == 1 and self.clamp_lo is None and self.block_lo is None) or \
                (self.rd == 1 and self.clamp_hi is None and self.block_hi is None):
            raise ConfigurationError("infinite infected region needs a clamp or a block")
        if contact:
            kinds = [LAMBDA] if c.lambda_rate > 0 or c._script is not None else []
            if c.delta_target == 0 and (c.delta_rate > 0 or c._script is not None):
                kinds.append(DELTA)
        else:
            kinds = list(c.arrow_kinds("both"))
        self.kinds = tuple(kinds)
        self.delta_target = c.delta_target
        self.st: Dict[int, int] = {}
        self.inf: set = set()
        lo_fill = self.wlo if self.ld != 1 else (self.clamp_lo if self.clamp_lo is not None else self.block_lo)
        hi_fill = self.whi if self.rd != 1 else (self.clamp_hi if self.clamp_hi is not None else self.block_hi)
        for x in range(lo_fill, hi_fill + 1):
            if not self._inside(x):
                continue
            v = eta.value(x)
            if contact:
                v = 1 if v == 1 else 0
            if x in eta.window or v != self._default(x):
                self.st[x] = v
            if v == 1:
                self.inf.add(x)
        self.ever = set(self.inf)
        self.heap: list = []
        self.armed: set = set()
        self._clocks: Dict[int, tuple] = {}
        self._recount()
        self.died_at: Optional[float] = None
        self.record = record
        self.samples: List[Tuple[float, float, float, float]] = []
        self.log: Optional[list] = [] if log else None
        self.snap_times = sorted(t for t in snap_times if t0 <= t <= t_end)
        self.snapshots: Dict[float, Configuration] = {}
        self._moved = False
        for x in sorted(self.inf):
            self._activate(x, t0)
        if self.clamp_lo is not None:
            for x in range(self.clamp_lo - self.M, self.clamp_lo):
                self._activate(x, t0)
        if self.clamp_hi is not None:
            for x in range(self.clamp_hi + 1, self.clamp_hi + self.M + 1):
                self._activate(x, t0)
        if record:
            self.samples.append((t0, self.r, self.l, self.size))
        if not self.inf and self.clamp_lo is None and self.clamp_hi is None:
            self.died_at = t0

    # ----------------------------------------------------------------- state
    def _inside(self, x: int) -> bool:
        if self.clamp_lo is not None and x < self.clamp_lo:
            return False
        if self.clamp_hi is not None and x > self.clamp_hi:
            return False
        if self.block_lo is not None and x < self.block_lo:
            return False
        if self.block_hi is not None and x > self.block_hi:
            return False
        return True

    def _default(self, x: int) -> int:
        v = self.ld if x < self.wlo else (self.rd if x > self.whi else -1)
        if v == 1:
            v = -1  # only reachable through blocks; such sites never exist
        return 0 if self.contact and v != 1 else v

    def state(self, x: int) -> int:
        if (self.clamp_lo is not None and x < self.clamp_lo) or (self.clamp_hi is not None and x > self.clamp_hi):
            return 1
        v = self.st.get(x)
        if v is not None:
            return v
        if not self._inside(x):
            return -1
        return self._default(x)

    def _recount(self):
        inf = self.inf
        self.r = INF if self.clamp_hi is not None else (max(inf) if inf else self._empty_r())
        self.l = -INF if self.clamp_lo is not None else (min(inf) if inf else self._empty_l())
        clamped = self.clamp_lo is not None or self.clamp_hi is not None
        self.size = INF if clamped else len(inf)

    def _empty_r(self) -> float:
        return self.clamp_lo - 1 if self.clamp_lo is not None else -INF

    def _empty_l(self) -> float:
        return self.clamp_hi + 1 if self.clamp_hi is not None else INF

    def infected(self) -> frozenset:
        return frozenset(self.inf)

    def configuration(self) -> Configuration:
        """Current state as a :class:`Configuration` (window = touched sites)."""
        if self.clamp_lo is not None or self.clamp_hi is not None:
            raise ConfigurationError("clamped runs have no finite description")
        w = dict(self.st)
        if not w:
            w = {self.wlo: self.state(self.wlo)}
        lo, hi = min(w), max(w)
        for x in range(lo, hi + 1):
            w[x] = self.state(x)
        ld = self.state(lo - 1)
        rd = self.state(hi + 1)
        if not self.contact:
            ld = ld if ld != 1 else -1
        return Configuration(w, ld, rd)

    # ----------------------------------------------------------------- clocks
    def _clocks_of(self, x: int) -> tuple:
        cl = self._clocks.get(x)
        if cl is None:
            out = []
            if self._inside(x):
                out.append((RECOVERY, x, x))
            for kind in self.kinds:
                for d in range(1, self.M + 1):
                    for y in (x - d, x + d):
                        if self._inside(y):
                            out.append((kind, x, y))
            cl = self._clocks[x] = tuple(out)
        return cl

    def _activate(self, x: int, now: float):
        nxt = self.c.next_time
        armed = self.armed
        t_end = self.t_end
        for clock in self._clocks_of(x):
            if clock not in armed:
                tn = nxt(clock, now)
                if tn <= t_end:
                    heapq.heappush(self.heap, (tn,) + clock)
                    armed.add(clock)

    def _source_on(self, x: int) -> bool:
        if x in self.inf:
            return True
        return (self.clamp_lo is not None and x < self.clamp_lo) or (self.clamp_hi is not None and x > self.clamp_hi)

    # ----------------------------------------------------------------- stepping
    def peek(self) -> float:
        return self.heap[0][0] if self.heap else INF

    def step(self) -> Optional[Tuple[int, int, int]]:
        """Process the next queued mark; return ``(site, old, new)`` on a change."""
        item = heapq.heappop(self.heap)
        time, kind, src, tgt = item
        clock = item[1:]
        while self.snap_times and self.snap_times[0] < time:
            self._snap(self.snap_times.pop(0))
        self.t = time
        if not self._source_on(src) or (self._moved and clock not in self._clocks_of(src)):
            self.armed.discard(clock)
            return None
        tn = self.c.next_time(clock, time)
        if tn <= self.t_end:
            heapq.heappush(self.heap, (tn,) + clock)
        else:
            self.armed.discard(clock)
        if kind == RECOVERY:
            return self._recover(src, time)
        st = self.st
        old = st.get(tgt)
        if old is None:
            old = self._default(tgt)
        if old == 1:
            return None
        if not self.contact and kind == DELTA and old != self.delta_target:
            return None
        st[tgt] = 1
        self.inf.add(tgt)
        self.ever.add(tgt)
        if tgt > self.r:
            self.r = tgt
        if tgt < self.l:
            self.l = tgt
        if self.size != INF:
            self.size += 1
        self._activate(tgt, time)
        return self._changed(time, tgt, old, 1)

    def _recover(self, x: int, time: float):
        self.st[x] = 0
        inf = self.inf
        inf.discard(x)
        if self.size != INF:
            self.size -= 1
        if not inf:
            if self.r != INF:
                self.r = self._empty_r()
            if self.l != -INF:
                self.l = self._empty_l()
        else:
            if x == self.r:
                y = x - 1
                while y not in inf:
                    y -= 1
                self.r = y
            if x == self.l:
                y = x + 1
                while y not in inf:
                    y += 1
                self.l = y
        if self.size == 0 and self.died_at is None:
            self.died_at = time
            self.heap.clear()
            self.armed.clear()
        return self._changed(time, x, 1, 0)

    def advance_left(self, a: int, now: float) -> None:
        """Move the left block or clamp boundary up to ``a`` at time ``now``.

        Under a block the sites below ``a`` are removed (a lower bound for the
        true process); under a clamp they are held infected (an upper bound).
        """
        if self.block_lo is not None:
            old = self.block_lo
        elif self.clamp_lo is not None:
            old = self.clamp_lo
        else:
            raise ConfigurationError("no left boundary to move")
        if a <= old:
            return
        self._moved = True
        for x in range(old, a):
            self.st.pop(x, None)
            if x in self.inf:
                self.inf.discard(x)
                if self.size != INF:
                    self.size -= 1
        for x in range(old - self.M, a + self.M):
            self._clocks.pop(x, None)
        if self.block_lo is not None:
            self.block_lo = a
        else:
            self.clamp_lo = a
            for x in range(a - self.M, a):
                self._activate(x, now)
        self._recount()

    def _changed(self, time, x, old, new):
        if self.record:
            self.samples.append((time, self.r, self.l, self.size))
        if self.log is not None:
            self.log.append((time, x, old, new))
        return (x, old, new)

    def _snap(self, t: float):
        self.snapshots[t] = self.configuration()

    def run(self) -> "Run":
        heap = self.heap
        step = self.step
        while heap:
            step()
        self.finish()
        return self

    def finish(self):
        for t in self.snap_times:
            self._snap(t)
        self.snap_times = []
        self.t = self.t_end

    def trajectory(self) -> Trajectory:
        return Trajectory(list(self.samples), dict(self.snapshots), self.died_at, frozenset(self.ever), self.t_end)


def co_step(runs: Sequence[Run], on_time: Optional[Callable[[float, list], bool]] = None,
            until: float = INF) -> None:
    """Advance ``runs`` together in global time order.

    After all marks at a given time have been processed, ``on_time(t, changes)``
    is called with the list of ``(run_index, (site, old, new))`` changes; it may
    return ``True`` to stop early.
    """
    while True:
        t = INF
        for r in runs:
            p = r.peek()
            if p < t:
                t = p
        if t == INF or t > until:
            break
        changes = []
        for i, r in enumerate(runs):
            while r.heap and r.heap[0][0] == t:
                ch = r.step()
                if ch is not None:
                    changes.append((i, ch))
        if on_time is not None and changes and on_time(t, changes):
            return
    for r in runs:
        if until == INF or until >= r.t_end:
            r.finish()


# ---------------------------------------------------------------------------- checks
def _check_params(p: ProcessParams, c: Construction) -> None:
    if c.M != p.M:
        raise ConfigurationError(f"construction range {c.M} does not match M={p.M}")
    if c._script is not None:
        return
    lo, hi = min(p.lam, p.mu), abs(p.mu - p.lam)
    target = 0 if p.mu >= p.lam else -1
    if not (math.isclose(c.lambda_rate, lo, abs_tol=1e-12) and math.isclose(c.delta_rate, hi, abs_tol=1e-12)
            and (c.delta_target == target or hi == 0)):
        raise ConfigurationError("construction streams do not match (lambda, mu)")


def _check_T(c: Construction, T: float):
    if T > c.horizon:
        raise HorizonExceeded(f"T={T} exceeds construction horizon {c.horizon}")
    if T < 0:
        raise ParameterError("T must be nonnegative")


# ---------------------------------------------------------------------------- envelopes
def envelope_width(mu: float, T: float) -> int:
    """Initial half-width of the envelope window (doubled on failure)."""
    return 8 + int(math.ceil(0.05 * mu * T))


def envelope_pair(c: Construction, eta: Configuration, W: int, t0: float, t_end: float, contact: bool,
                  snap_times: Sequence[float] = (), record: bool = True) -> Tuple[Run, Run]:
    """Lower (blocked) and upper (clamped) runs for a start with infinite infected region."""
    a = eta.lo - W if eta.left_default == 1 else None
    b = eta.hi + W if eta.right_default == 1 else None
    lower = Run(c, eta, t0, t_end, contact, block=(a, b), snap_times=snap_times, record=record)
    upper = Run(c, eta, t0, t_end, contact, clamp=(a, b), snap_times=snap_times, record=record)
    return lower, upper


MAX_DOUBLINGS = 8


def certified_pair(c: Construction, eta: Configuration, t0: float, t_end: float, contact: bool,
                   agree: Callable[[Run, Run], bool], W: Optional[int] = None,
                   snap_times: Sequence[float] = (), record: bool = True,
                   trail: bool = False) -> Tuple[Run, Run, int]:
    """Run lower and upper envelopes, widening until ``agree`` holds at every event time.

    With ``trail`` (left half-line starts only) the left boundary follows the
    lower run's right edge at distance ``W``, so the cost stays linear in time.
    """
    mu = c.lambda_rate + (c.delta_rate if c.delta_target == 0 else 0.0)
    W = envelope_width(max(mu, c.lambda_rate + c.delta_rate, 1.0), t_end - t0) if W is None else W
    if trail and not (eta.left_default == 1 and eta.right_default != 1):
        raise ConfigurationError("trailing envelopes need a left half-line start")
    for _ in range(MAX_DOUBLINGS):
        lower, upper = envelope_pair(c, eta, W, t0, t_end, contact, snap_times, record)
        bad = [False]
        cut = [eta.lo - W]
        step = max(1, W // 2)

        def watch(t, changes):
            if not agree(lower, upper):
                bad[0] = True
                return True
            if trail and lower.r - W >= cut[0] + step:
                cut[0] = int(lower.r) - W
                lower.advance_left(cut[0], t)
                upper.advance_left(cut[0], t)
            return False

        if agree(lower, upper):
            co_step([lower, upper], watch)
            if not bad[0]:
                return lower, upper, W
        W *= 2
    raise CertificationError(f"envelope not certified with window {W}")


def _edge_agree(lower: Run, upper: Run) -> bool:
    return lower.r == upper.r


def _left_edge_agree(lower: Run, upper: Run) -> bool:
    return lower.l == upper.l


def _half_line_trajectory(c, eta, t0, T, contact, snap_times=()) -> Trajectory:
    if not contact and c._script is None and c.delta_target != 0 and c.delta_rate > 0:
        raise UnsupportedError("infinite infected starts need mu >= lambda (monotone envelope)")
    left, right = eta.left_default == 1, eta.right_default == 1
    if left and right:
        lower, upper, _ = certified_pair(c, eta, t0, T, contact, lambda a, b: True, snap_times=())
        samples = [(t0, INF, -INF, INF)]
        return Trajectory(samples, {}, None, frozenset(), T)
    agree = _edge_agree if left else _left_edge_agree
    lower, upper, _ = certified_pair(c, eta, t0, T, contact, agree)
    out = []
    last = None
    for (t, r, l, n) in lower.samples:
        key = r if left else l
        if key != last:
            out.append((t, r, -INF, INF) if left else (t, INF, l, INF))
            last = key
    ever = frozenset(x for x in lower.ever if (x > eta.hi if left else x < eta.lo))
    return Trajectory(out, {}, None, ever, T)


# ---------------------------------------------------------------------------- public evolutions
def evolve_three_state(eta: Configuration, p: ProcessParams, c: Construction, T: float,
                       snap_times: Sequence[float] = ()) -> Trajectory:
    """Three-state process from ``eta`` on ``c`` up to time ``T``.

    Finite-support starts are simulated directly.  Half-line starts (one
    default equal to 1) return the certified edge path only: samples at every
    change of ``r`` with ``l = -inf`` and ``size = inf``.
    """
    _check_params(p, c)
    _check_T(c, T)
    if p.M > 1 and p.lam != p.mu:
        raise UnsupportedError("three-state dynamics with range M > 1 are not supported")
    if not eta.finite_support():
        return _half_line_trajectory(c, eta, 0.0, T, False, snap_times)
    return Run(c, eta, 0.0, T, snap_times=snap_times).run().trajectory()


def evolve_contact(A, mu: float, c: Construction, T: float, snap_times: Sequence[float] = ()) -> Trajectory:
    """Contact process at rate ``mu`` from the set ``A`` (or a half-line Configuration)."""
    _check_T(c, T)
    if c._script is None:
        rate = c.lambda_rate + (c.delta_rate if c.delta_target == 0 else 0.0)
        if not math.isclose(rate, mu, abs_tol=1e-12):
            raise ConfigurationError(f"construction reinfection rate {rate} does not match mu={mu}")
    eta = A if isinstance(A, Configuration) else Configuration.from_sets(A, default=0)
    if not eta.finite_support():
        return _half_line_trajectory(c, eta, 0.0, T, True, snap_times)
    return Run(c, eta, 0.0, T, contact=True, snap_times=snap_times).run().trajectory()


def evolve_range_M(eta, p: ProcessParams, c: Construction, T: float, snap_times: Sequence[float] = ()) -> Trajectory:
    """Range-M contact process (lambda = mu required)."""
    if p.lam != p.mu:
        raise UnsupportedError("range-M dynamics are implemented for lambda = mu only")
    _check_params(p, c)
    return evolve_contact(eta, p.mu, c, T, snap_times)


def forest_fire_cluster(w: int, lam: float, c: Construction,
                        bounds: Tuple[Optional[int], Optional[int]] = (None, None)) -> frozenset:
    """Sites reached from ``w`` when each site burns once (mu = 0).

    Edge ``u -> v`` is open when the first arrow from u to v after u's
    ignition precedes u's first recovery after ignition; the cluster is the
    set of sites reached along open edges, found with Dijkstra on ignition
    times.
    """
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    kinds = [LAMBDA]
    if c.delta_target == -1:
        kinds.append(DELTA)
    lo, hi = bounds
    best = {w: 0.0}
    done = set()
    heap = [(0.0, w)]
    nxt = c.next_time
    while heap:
        t_u, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        rec = nxt((RECOVERY, u, u), t_u)
        for d in range(1, c.M + 1):
            for v in (u - d, u + d):
                if (lo is not None and v < lo) or (hi is not None and v > hi) or v in done:
                    continue
                a = min(nxt((k, u, v), t_u) for k in kinds)
                if a < rec and a < best.get(v, INF):
                    best[v] = a
                    heapq.heappush(heap, (a, v))
    return frozenset(done)
