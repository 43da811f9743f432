"""Subcritical decay: range reached, lifetime and containment from a block start."""
from __future__ import annotations

import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

from .graphical import ParameterError, derive_seed
from .processes import Configuration, ProcessParams, Run
from .stats import InsufficientDataError, LogLinearFit, Proportion, fit_log_linear, kendall_trend, proportion

DEFAULT_HORIZON = 10_000.0


class DecayFit(NamedTuple):
    levels: List[Tuple[float, float, float]]
    slope: float
    intercept: float
    r2: float
    slope_se: float
    unfinished: int = 0

    def nonincreasing(self, z: float = 3.0) -> bool:
        """Levels nonincreasing up to ``z`` combined standard errors."""
        return all(b[1] <= a[1] + z * math.hypot(a[2], b[2]) for a, b in zip(self.levels, self.levels[1:]))


def _run(p: ProcessParams, seed: int, eta: Configuration, horizon: float) -> Run:
    c = p.construction(seed, horizon)
    return Run(c, eta, 0.0, horizon, record=False).run()


# ---------------------------------------------------------------------------- range
def range_replica(p: ProcessParams, seed: int, horizon: float = DEFAULT_HORIZON) -> Tuple[int, bool]:
    """Largest ``|x|`` ever infected from the origin, and whether the run died before ``horizon``."""
    r = _run(p, seed, Configuration.standard(0), horizon)
    return max(abs(x) for x in r.ever), r.died_at is not None


def range_levels(maxima: Sequence[int], n_max: int) -> List[Tuple[int, Proportion]]:
    n = len(maxima)
    return [(k, proportion(sum(m >= k for m in maxima), n)) for k in range(1, n_max + 1)]


def _fit(levels, reps) -> Tuple[LogLinearFit, List[Tuple[float, float, float]]]:
    rows = [(float(x), pr.p, pr.se) for x, pr in levels]
    fit = fit_log_linear([(x, pr.p, reps) for x, pr in levels])
    return fit, rows


def range_decay(p: ProcessParams, n_max: int, reps: int, seed: int = 0,
                horizon: float = DEFAULT_HORIZON) -> DecayFit:
    """Fraction of runs from the origin whose range reaches ``n`` (``n = 1..n_max``)."""
    if n_max < 3:
        raise ParameterError("n_max must be at least 3 for a fit")
    if reps < 1:
        raise InsufficientDataError("need at least one replica")
    out = [range_replica(p, derive_seed(seed, i), horizon) for i in range(reps)]
    return range_fit([m for m, _ in out], n_max, sum(not d for _, d in out))


def range_fit(maxima: Sequence[int], n_max: int, unfinished: int = 0) -> DecayFit:
    fit, rows = _fit(range_levels(maxima, n_max), len(maxima))
    return DecayFit(rows, fit.slope, fit.intercept, fit.r2, fit.slope_se, unfinished)


# ---------------------------------------------------------------------------- lifetime
def lifetime_replica(p: ProcessParams, seed: int, t_max: float) -> float:
    """Extinction time from the origin, ``inf`` if still alive at ``t_max``."""
    r = _run(p, seed, Configuration.standard(0), t_max)
    return math.inf if r.died_at is None else r.died_at


def lifetime_fit(death_times: Sequence[float], t_grid: Sequence[float]) -> DecayFit:
    """Survival curve on ``t_grid``; the log-linear fit uses the tail half of the grid."""
    grid = sorted(t_grid)
    if len(grid) < 6:
        raise ParameterError("t_grid needs at least 6 points (the fit uses the tail half)")
    n = len(death_times)
    levels = [(t, proportion(sum(d > t for d in death_times), n)) for t in grid]
    tail = levels[len(levels) // 2:]
    fit = fit_log_linear([(t, pr.p, n) for t, pr in tail])
    return DecayFit([(float(t), pr.p, pr.se) for t, pr in levels], fit.slope, fit.intercept, fit.r2, fit.slope_se)


def lifetime_decay(p: ProcessParams, t_grid: Sequence[float], reps: int, seed: int = 0) -> DecayFit:
    t_max = max(t_grid)
    return lifetime_fit([lifetime_replica(p, derive_seed(seed, i), t_max) for i in range(reps)], t_grid)


# ---------------------------------------------------------------------------- containment
def block_start(N: int) -> Configuration:
    """Sites ``-N..N`` infected, all others never infected."""
    return Configuration({x: 1 for x in range(-N, N + 1)})


def containment_replica(p: ProcessParams, N: int, seed: int, S: float) -> Tuple[bool, bool]:
    """``(contained, died)``: contained means inside ``[-N, N]`` through ``S`` and extinct by ``S``."""
    r = _run(p, seed, block_start(N), S)
    died = r.died_at is not None
    inside = all(-N <= x <= N for x in r.ever)
    return inside and died, died


def pilot_horizon(p: ProcessParams, N: int, reps: int = 2000, seed: int = 0,
                  t_cap: float = DEFAULT_HORIZON) -> float:
    """Twice the largest extinction time seen over ``reps`` pilot runs from the ``N`` block."""
    worst = 0.0
    for i in range(reps):
        r = _run(p, derive_seed(seed, 0x5EED, i), block_start(N), t_cap)
        if r.died_at is None:
            raise ParameterError(f"pilot run alive at {t_cap}: parameters do not look subcritical")
        worst = max(worst, r.died_at)
    return 2.0 * max(worst, 1.0)


class ContainmentReport(NamedTuple):
    rows: List[Tuple[int, float, float]]
    cis: List[Tuple[float, float]]
    S: float
    alive_at_S: List[int]
    min_eps: float
    kendall_tau: float
    kendall_p: float

    @property
    def all_positive(self) -> bool:
        return all(lo > 0 for lo, _ in self.cis)


def containment_report(counts: Sequence[Tuple[int, int, int, int]], S: float) -> ContainmentReport:
    """From ``(N, contained, alive_at_S, reps)`` rows."""
    rows, cis, alive = [], [], []
    for N, k, a, n in counts:
        pr = proportion(k, n)
        rows.append((N, pr.p, pr.se))
        cis.append(pr.ci())
        alive.append(a)
    tau, pv = kendall_trend([r[0] for r in rows], [r[1] for r in rows]) if len(rows) >= 2 else (0.0, 1.0)
    return ContainmentReport(rows, cis, S, alive, min(r[1] for r in rows), tau, pv)


def containment_probability(N_grid: Sequence[int], p: ProcessParams, reps: int, seed: int = 0,
                            S: Optional[float] = None) -> ContainmentReport:
    """Estimate ``P(contained in [-N, N] forever)`` for each ``N`` by the finite-``S`` surrogate."""
    if not N_grid:
        raise ParameterError("empty N grid")
    S = pilot_horizon(p, max(N_grid), seed=seed) if S is None else S
    counts = []
    for N in N_grid:
        k = alive = 0
        for i in range(reps):
            ok, died = containment_replica(p, N, derive_seed(seed, N, i), S)
            k += ok
            alive += not died
        counts.append((N, k, alive, reps))
    return containment_report(counts, S)
