"""Break points of the right edge, edge speed and density estimators, and
c.s.e. regeneration for range-M contact processes."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .graphical import Construction, ParameterError, derive_seed
from .processes import (INF, MAX_DOUBLINGS, CertificationError, Configuration, ProcessParams, Run,
                        certified_pair, co_step, envelope_pair)
from .stats import InsufficientDataError, ks_normal, mean_se, proportion, ratio_of_means


@dataclass(frozen=True)
class RegenRecord:
    X: int
    Psi: float
    Mback: int
    censored: bool = False


class SpeedEstimate(NamedTuple):
    alpha_hat: float
    se: float
    n_records: int
    horizon_used: float


class EdgePath:
    """Right-continuous step function ``t -> r_t`` with running-extreme queries."""

    def __init__(self, samples: Sequence[Tuple[float, float]]):
        self.times = [s[0] for s in samples]
        self.values = [s[1] for s in samples]
        self._hit: Dict[int, float] = {}
        top = -INF
        for t, v in zip(self.times, self.values):
            while v > top:
                top = v if top == -INF else top + 1
                self._hit.setdefault(int(top), t)
        self.top = top

    def value(self, t: float) -> float:
        return self.values[bisect.bisect_right(self.times, t) - 1]

    def hit(self, k: int) -> float:
        """First time the path reaches level ``k`` (``inf`` if never)."""
        return self._hit.get(k, INF)

    def next_at(self, level: float, t: float) -> float:
        """First time ``>= t`` at which the path equals ``level`` (``inf`` if never)."""
        i = max(bisect.bisect_right(self.times, t) - 1, 0)
        if self.values[i] == level:
            return t
        for j in range(i + 1, len(self.times)):
            if self.values[j] == level:
                return self.times[j]
        return INF

    def _slice(self, t0: float, t1: float) -> List[float]:
        i = max(bisect.bisect_right(self.times, t0) - 1, 0)
        j = bisect.bisect_left(self.times, t1)
        return self.values[i:max(j, i + 1)]

    def min_on(self, t0: float, t1: float) -> float:
        """Minimum over ``[t0, t1)``."""
        return min(self._slice(t0, t1))

    def max_on(self, t0: float, t1: float) -> float:
        return max(self._slice(t0, t1))


TRAIL_WIDTH = 16


def half_line_edge(p: ProcessParams, c: Construction, T: float, k: int = 0, t0: float = 0.0,
                   contact: bool = False) -> EdgePath:
    """Certified right edge of the process started from ``(-inf, k]`` infected at ``t0``."""
    lower, _, _ = certified_pair(c, Configuration.eta_bar(k), t0, T, contact, lambda a, b: a.r == b.r,
                                 W=TRAIL_WIDTH, trail=True)
    return EdgePath([(s[0], s[1]) for s in lower.samples])


# ---------------------------------------------------------------------------- break points
def find_break_points(p: ProcessParams, seed: int, T: float, S: float,
                      c: Optional[Construction] = None, edge: Optional[EdgePath] = None) -> List[RegenRecord]:
    """Break points along the edge of the half-line process up to ``T``.

    Candidates ``k`` are restarted from ``eta_k`` at the hitting time ``T_k``
    and accepted when still alive ``S`` later.  After a failed candidate
    that died at ``rho`` the next candidate is ``1 + max r`` over its life.
    The final record is censored.
    """
    if not p.mu >= p.lam > 0:
        raise ParameterError("break points need mu >= lambda > 0")
    if S < 0 or T < 0:
        raise ParameterError("T and S must be nonnegative")
    c = c if c is not None else p.construction(seed, T + S)
    if c.horizon < T + S:
        raise ParameterError("construction horizon must cover T + S")
    edge = edge if edge is not None else half_line_edge(p, c, T + S)
    records: List[RegenRecord] = []
    K, tau_K = 0, 0.0
    Y = 1
    while True:
        TY = edge.hit(Y)
        if TY > T:
            break
        cand = Run(c, Configuration.standard(Y), TY, TY + S).run()
        if cand.died_at is None:
            records.append(RegenRecord(Y - K, TY - tau_K, int(K - edge.min_on(tau_K, TY))))
            K, tau_K, Y = Y, TY, Y + 1
        else:
            Y = 1 + int(max(s[1] for s in cand.samples if s[0] < cand.died_at))
    top = edge.max_on(tau_K, T)
    records.append(RegenRecord(max(1, int(top) - K), T - tau_K, int(K - edge.min_on(tau_K, T)), True))
    return records


def complete(records: Sequence[RegenRecord]) -> List[RegenRecord]:
    return [r for r in records if not r.censored]


def estimate_alpha(records: Sequence[RegenRecord], min_records: int = 30) -> SpeedEstimate:
    """Ratio of mean spatial to mean temporal increment over complete records."""
    rec = complete(records)
    if len(rec) < min_records:
        raise InsufficientDataError(f"{len(rec)} complete records, need {min_records}")
    a, se = ratio_of_means([r.X for r in rec], [r.Psi for r in rec])
    return SpeedEstimate(a, se, len(rec), float(sum(r.Psi for r in rec)))


def estimate_sigma2(records: Sequence[RegenRecord], alpha_hat: float, min_records: int = 30) -> float:
    """Regenerative variance ``mean((X - alpha Psi)^2) / mean(Psi)``; 0 flags a degenerate sample."""
    rec = complete(records)
    if len(rec) < min_records:
        raise InsufficientDataError(f"{len(rec)} complete records, need {min_records}")
    X = np.array([r.X for r in rec], dtype=float)
    P = np.array([r.Psi for r in rec], dtype=float)
    return float(((X - alpha_hat * P) ** 2).mean() / P.mean())


class NormalityReport(NamedTuple):
    n_blocks: int
    block_size: int
    ks_stat: float
    p_value: float


def clt_diagnostic(records: Sequence[RegenRecord], alpha_hat: float, sigma2_hat: float,
                   min_records: int = 200) -> NormalityReport:
    """KS test of standardized block sums of ``X - alpha Psi`` against N(0, 1).

    Blocks of ``ceil(sqrt(n))`` consecutive records are standardized by
    ``sqrt(sigma2 * sum(Psi))``.
    """
    rec = complete(records)
    if len(rec) < min_records:
        raise InsufficientDataError(f"{len(rec)} complete records, need {min_records}")
    if not sigma2_hat > 0:
        raise InsufficientDataError("degenerate records: sigma^2 = 0")
    b = int(math.ceil(math.sqrt(len(rec))))
    m = len(rec) // b
    X = np.array([r.X for r in rec[:m * b]], dtype=float).reshape(m, b)
    P = np.array([r.Psi for r in rec[:m * b]], dtype=float).reshape(m, b)
    z = (X - alpha_hat * P).sum(axis=1) / np.sqrt(sigma2_hat * P.sum(axis=1))
    d, pv = ks_normal(z)
    return NormalityReport(m, b, d, pv)


def direct_speed(p: ProcessParams, seeds: Sequence[int], T: float) -> Tuple[float, float]:
    """Mean of ``r_T / T`` for the half-line process, the edge that ``zeta^O`` follows on survival."""
    vals = []
    for s in seeds:
        c = p.construction(s, T)
        vals.append(half_line_edge(p, c, T).value(T) / T)
    return mean_se(vals)


# ---------------------------------------------------------------------------- density and survival
class ThetaEstimate(NamedTuple):
    theta: float
    se: float
    left: float
    right: float
    halves_se: float
    early: float
    early_se: float
    window: int


def theta_replica(mu: float, seed: int, window: int, T: float) -> Tuple[float, float, float, float, int]:
    """``(central, left, right, at T/2, window used)`` occupied fractions for one replica from the
    all-infected start; the window doubles until the central half is certified."""
    W = window
    while True:
        out = _density_run_full(mu, seed, W, T)
        if out is not None:
            (tot, lf, rf), mid = out
            return tot, lf, rf, mid, W
        W *= 2


def theta_from_replicas(rows: Sequence[Tuple[float, float, float, float, int]]) -> ThetaEstimate:
    if len(rows) < 2:
        raise InsufficientDataError("need at least 2 replicas")
    th, se = mean_se([r[0] for r in rows])
    lm, ls = mean_se([r[1] for r in rows])
    rm, rs = mean_se([r[2] for r in rows])
    em, es = mean_se([r[3] for r in rows])
    return ThetaEstimate(th, se, lm, rm, math.hypot(ls, rs), em, es, max(r[4] for r in rows))


def estimate_theta(mu: float, window: int, T: float, reps: int, seed: int = 0) -> ThetaEstimate:
    """Density of the upper invariant measure from the all-infected start at time ``T``.

    Each replica contributes the occupied fraction of the central half of
    ``[-window, window]``.  ``early`` is the same density at ``T/2``
    (stationarity check).
    """
    if reps < 2:
        raise InsufficientDataError("need at least 2 replicas")
    return theta_from_replicas([theta_replica(mu, derive_seed(seed, i), window, T) for i in range(reps)])


def _density_run_full(mu, seed, W, T):
    c = Construction.for_params(seed, mu, mu, T)
    eta = Configuration({0: 1}, 1, 1)
    lower = Run(c, eta, 0.0, T, contact=True, block=(-W, W), record=False)
    upper = Run(c, eta, 0.0, T, contact=True, clamp=(-W, W), record=False)
    h = W // 2
    co_step([lower, upper], until=T / 2)
    if any((x in lower.inf) != (x in upper.inf) for x in range(-h, h + 1)):
        return None
    mid_occ = sum(x in lower.inf for x in range(-h, h + 1)) / (2 * h + 1)
    co_step([lower, upper])
    if any((x in lower.inf) != (x in upper.inf) for x in range(-h, h + 1)):
        return None
    inf = lower.inf
    tot = sum(x in inf for x in range(-h, h + 1)) / (2 * h + 1)
    lf = sum(x in inf for x in range(-h, 0)) / h
    rf = sum(x in inf for x in range(1, h + 1)) / h
    return (tot, lf, rf), mid_occ


class VoidEstimate(NamedTuple):
    phi: float
    se: float
    positions: int


def void_window(mu: float, t: float) -> int:
    return 40 + int(math.ceil(2.2 * mu * t))


def void_replica(mu: float, F: Sequence[int], t: float, seed: int,
                 window: Optional[int] = None) -> Tuple[float, int]:
    """Fraction of translates of ``F`` in the certified central half missed by ``xi^Z_t``,
    with the number of translates."""
    F = sorted(set(F))
    if not F:
        return 1.0, 0
    W = window if window is not None else void_window(mu, t)
    while True:
        c = Construction.for_params(seed, mu, mu, t)
        eta = Configuration({0: 1}, 1, 1)
        lower = Run(c, eta, 0.0, t, contact=True, block=(-W, W), record=False)
        upper = Run(c, eta, 0.0, t, contact=True, clamp=(-W, W), record=False)
        co_step([lower, upper])
        h = W // 2
        if all((x in lower.inf) == (x in upper.inf) for x in range(-h, h + 1)):
            break
        W *= 2
    inf = lower.inf
    shifts = range(-h - F[0], h - F[-1] + 1)
    return sum(all((y + s) not in inf for y in F) for s in shifts) / len(shifts), len(shifts)


def void_from_replicas(rows: Sequence[Tuple[float, int]]) -> VoidEstimate:
    if not rows:
        raise InsufficientDataError("no void replicas")
    m, se = mean_se([v for v, _ in rows])
    return VoidEstimate(m, 0.0 if math.isnan(se) else se, min(n for _, n in rows))


def estimate_void(mu: float, F: Sequence[int], t: float, reps: int, seed: int = 0,
                  window: Optional[int] = None) -> VoidEstimate:
    """``P(xi^Z_t misses F)`` averaged over all translates of ``F`` in the certified central half."""
    if not F:
        return VoidEstimate(1.0, 0.0, 0)
    return void_from_replicas([void_replica(mu, F, t, derive_seed(seed, i), window) for i in range(reps)])


class BetaEstimate(NamedTuple):
    beta_S: float
    se_S: float
    beta_2S: float
    se_2S: float
    reps: int


def estimate_beta(p: ProcessParams, S: float, reps: int, seed: int = 0) -> BetaEstimate:
    """Fraction of ``zeta^O`` replicas alive at ``S`` and at ``2S``."""
    if reps < 1:
        raise InsufficientDataError("need replicas")
    a1 = a2 = 0
    for i in range(reps):
        c = p.construction(derive_seed(seed, i), 2 * S)
        r = Run(c, Configuration.standard(0), 0.0, 2 * S, record=False).run()
        a1 += r.died_at is None or r.died_at > S
        a2 += r.died_at is None
    b1, b2 = proportion(a1, reps), proportion(a2, reps)
    return BetaEstimate(b1.p, b1.se, b2.p, b2.se, reps)


class GrowthReport(NamedTuple):
    size_rate: float
    size_rate_se: float
    predicted: float
    predicted_se: float
    rel_diff: float
    survivors: int
    skipped: bool


def growth_replica(p: ProcessParams, seed: int, T: float) -> Optional[float]:
    """``|I_T| / T`` for ``zeta^O``, ``None`` if it died by ``T``."""
    c = p.construction(seed, T)
    r = Run(c, Configuration.standard(0), 0.0, T, record=False).run()
    return len(r.inf) / T if r.died_at is None else None


def growth_report(sizes: Sequence[float], alpha: Tuple[float, float], theta: Tuple[float, float]) -> GrowthReport:
    """Survivor ``|I_T| / T`` values against ``2 alpha theta``."""
    if len(sizes) < 2:
        raise InsufficientDataError("fewer than 2 surviving replicas")
    m, se = mean_se(sizes)
    pred = 2 * alpha[0] * theta[0]
    pse = 2 * math.hypot(alpha[1] * theta[0], alpha[0] * theta[1])
    return GrowthReport(m, se, pred, pse, (m - pred) / pred, len(sizes), False)


def growth_lln_check(p: ProcessParams, T: float, reps: int, seed: int = 0, alpha: Tuple[float, float] = None,
                     theta: Tuple[float, float] = None, min_T: float = 20.0) -> GrowthReport:
    """Mean ``|I_T| / T`` over surviving replicas against ``2 alpha theta``.

    ``alpha`` and ``theta`` are ``(estimate, se)`` pairs; missing ones are
    estimated (break points on ``T``/ densities at ``T``) from fresh seeds.
    """
    if T < min_T:
        return GrowthReport(math.nan, math.nan, math.nan, math.nan, math.nan, 0, True)
    sizes = [g for g in (growth_replica(p, derive_seed(seed, 1, i), T) for i in range(reps)) if g is not None]
    if alpha is None:
        recs = []
        i = 0
        while len(complete(recs)) < 30:
            recs += find_break_points(p, derive_seed(seed, 2, i), T, 30.0)
            i += 1
        est = estimate_alpha(recs)
        alpha = (est.alpha_hat, est.se)
    if theta is None:
        th = estimate_theta(p.mu, 8 + int(2 * p.mu * 50), 50.0, 8, derive_seed(seed, 3))
        theta = (th.theta, th.se)
    return growth_report(sizes, alpha, theta)


class ConvergenceReport(NamedTuple):
    lhs: float
    rhs: float
    diff: float
    se: float
    beta: float
    void_alive: float
    phi: float
    reps: int


def zeta_void_replica(p: ProcessParams, F: Sequence[int], t: float, seed: int) -> Tuple[bool, bool, bool]:
    """``(alive at t, F missed, F inside [l_t, r_t])`` for one ``zeta^O`` run."""
    c = p.construction(seed, t)
    r = Run(c, Configuration.standard(0), 0.0, t, record=False).run()
    if not r.inf:
        return False, all(y not in r.inf for y in F), False
    return True, all(y not in r.inf for y in F), min(r.inf) <= min(F) and max(r.inf) >= max(F)


def convergence_report(alive: int, void_alive: int, reps: int, void: VoidEstimate) -> ConvergenceReport:
    """Combine ``zeta^O`` counts with a void estimate (see :func:`check_complete_convergence`)."""
    if reps < 1:
        raise InsufficientDataError("need replicas")
    b = proportion(alive, reps)
    q = void_alive / alive if alive else 0.0
    q_se = math.sqrt(q * (1 - q) / alive) if alive else 0.0
    lhs = (reps - alive + void_alive) / reps
    rhs = (1 - b.p) + b.p * void.phi
    se = math.sqrt(b.p ** 2 * (q_se ** 2 + void.se ** 2) + (q - void.phi) ** 2 * b.se ** 2)
    return ConvergenceReport(lhs, rhs, lhs - rhs, se, b.p, q, void.phi, reps)


def check_complete_convergence(p: ProcessParams, F: Sequence[int], t: float, reps: int, seed: int = 0,
                               void: Optional[VoidEstimate] = None, void_reps: int = 20) -> ConvergenceReport:
    """``P(I_t misses F)`` against ``(1 - beta) + beta phi_F``.

    ``beta`` is the fraction of the same replicas alive at ``t`` so the
    difference reduces to ``beta (q - phi)`` with ``q`` the void frequency
    among survivors; its standard error is propagated by the delta method.
    """
    F = sorted(set(F))
    if not F:
        return ConvergenceReport(1.0, 1.0, 0.0, 0.0, math.nan, 1.0, 1.0, reps)
    alive = void_alive = 0
    for i in range(reps):
        a, v, _ = zeta_void_replica(p, F, t, derive_seed(seed, 1, i))
        alive += a
        void_alive += a and v
    if void is None:
        void = estimate_void(p.mu, F, t, void_reps, derive_seed(seed, 2))
    return convergence_report(alive, void_alive, reps, void)


# ---------------------------------------------------------------------------- c.s.e.
def cse_failure_time(c: Construction, x: int, s: float, t_end: float, W: int = TRAIL_WIDTH) -> float:
    """First time in ``(s, t_end]`` at which the edge from ``x`` at ``s`` differs from the
    edge of the half-line ``(-inf, x]`` started at ``s`` (``inf`` if never).

    The half-line edge comes from trailing envelopes co-stepped with the
    single-seed run, so a failing candidate costs only its time to failure.
    """
    eta = Configuration({x: 1}, 1, 0)
    for _ in range(MAX_DOUBLINGS):
        lower, upper = envelope_pair(c, eta, W, s, t_end, True, record=False)
        single = Run(c, Configuration({x: 1}, 0, 0), s, t_end, contact=True, record=False)
        out = [INF, False]
        cut = [x - W]
        step = max(1, W // 2)

        def watch(t, changes):
            if lower.r != upper.r:
                out[1] = True
                return True
            if lower.r - W >= cut[0] + step:
                cut[0] = int(lower.r) - W
                lower.advance_left(cut[0], t)
                upper.advance_left(cut[0], t)
            if single.r != lower.r:
                out[0] = t
                return True
            return False

        co_step([lower, upper, single], watch)
        if not out[1]:
            return out[0]
        W *= 2
    raise CertificationError("half-line edge not certified")


def estimate_cse_probability(M: int, mu: float, S_grid: Sequence[float], reps: int,
                             seed: int = 0) -> List[Tuple[float, float, float]]:
    """``(S, p_hat, se)``: fraction of replicas whose single-seed edge equals the
    half-line edge on ``[0, S]``."""
    if not S_grid:
        return []
    S_max = max(S_grid)
    return cse_curve([cse_replica(M, mu, derive_seed(seed, i), S_max) for i in range(reps)], S_grid)


def cse_replica(M: int, mu: float, seed: int, S_max: float) -> float:
    """Failure time of the single-seed/half-line edge agreement from the origin."""
    c = Construction.for_params(seed, mu, mu, S_max, M)
    return cse_failure_time(c, 0, 0.0, S_max)


def cse_curve(fails: Sequence[float], S_grid: Sequence[float]) -> List[Tuple[float, float, float]]:
    """``(S, p_hat, se)`` from failure times."""
    reps = len(fails)
    out = []
    for S in S_grid:
        pr = proportion(sum(f > S for f in fails), reps)
        out.append((S, pr.p, pr.se))
    return out


def cse_regeneration(M: int, mu: float, seed: int, T: float, S: float) -> List[RegenRecord]:
    """c.s.e. points along the edge of ``xi^0`` up to ``T``, at least one time unit apart.

    Candidates are examined at ``psi + 1`` and at every later change of the
    edge; a candidate ``r_t x t`` is accepted when its single-seed and
    half-line edges agree on ``[t, t + S]``.  Increments may be nonpositive in
    space.  The last record is censored.
    """
    c = Construction.for_params(seed, mu, mu, T + S, M)
    base = Run(c, Configuration({0: 1}, 0, 0), 0.0, T, contact=True).run()
    path = [(s[0], s[1]) for s in base.samples]
    edge = EdgePath([(t, r) for t, r in path if r != -INF] or [(0.0, 0)])
    died = base.died_at if base.died_at is not None else INF
    records: List[RegenRecord] = []
    psi, r_psi = 0.0, 0
    change_times = [t for t, _ in path]
    while True:
        t0 = psi + 1.0
        if t0 > T or t0 >= died:
            break
        i = bisect.bisect_left(change_times, t0)
        cands = [t0] + [t for t in change_times[i:] if t > t0 and t <= T and t < died]
        accepted = None
        for t in cands:
            x = int(edge.value(t))
            if cse_failure_time(c, x, t, t + S) == INF:
                accepted = (t, x)
                break
        if accepted is None:
            break
        t, x = accepted
        records.append(RegenRecord(x - r_psi, t - psi, int(r_psi - edge.min_on(psi, t))))
        psi, r_psi = t, x
    end = min(T, died)
    top = edge.max_on(psi, end) if end > psi else r_psi
    low = edge.min_on(psi, end) if end > psi else r_psi
    records.append(RegenRecord(int(top) - r_psi, end - psi, int(r_psi - low), True))
    return records
