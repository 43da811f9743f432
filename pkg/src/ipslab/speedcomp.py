"""Competitions along the edge of the half-line process and the speed comparison
``alpha <= (lambda / mu) beta``.

Whenever the edge ``rbar`` sits at its running maximum ``xbar`` a competition
is held between the three clocks at ``xbar``: the lambda arrow to ``xbar+1``
(the edge advances), the (mu - lambda) arrow (ineffective on a never infected
site, a *punch* for the dominating contact process) and the recovery mark.
The competition outcome is read off the construction and cross-checked
against the certified edge path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .coupling import ViolationReport
from .graphical import DELTA, LAMBDA, RECOVERY, Construction, ParameterError, derive_seed
from .processes import (INF, CertificationError, Configuration, ProcessParams, Run, UnsupportedError,
                        co_step, envelope_width, MAX_DOUBLINGS)
from .regeneration import EdgePath, half_line_edge
from .stats import mean_se, ratio_of_means


@dataclass
class CompetitionTrace:
    horizon: float
    N: int
    F: int
    xbar: int
    D: int
    rbar_path: List[Tuple[float, float]]
    R_path: List[Tuple[float, float]]
    upsilon_times: List[float]
    cascade_upsilons: List[float] = field(default_factory=list)
    report: ViolationReport = field(default_factory=ViolationReport)

    @property
    def rbar_T(self) -> float:
        return self.rbar_path[-1][1]

    @property
    def R_T(self) -> float:
        return self.R_path[-1][1]


def _dedupe(samples) -> List[Tuple[float, float]]:
    out: List[Tuple[float, float]] = []
    for t, r in samples:
        if not out or out[-1][1] != r:
            out.append((t, r))
    return out


class _Retry(Exception):
    pass


def _cascade_pass(c: Construction, T: float, W: int, report: ViolationReport):
    """Lower/upper envelopes of the half-line process plus the contact cascade, all on one block.

    Returns the certified edge samples and the cascade hand-off times.
    """
    eta = Configuration.eta_bar(0)
    lower = Run(c, eta, 0.0, T, block=(-W, None))
    upper = Run(c, eta, 0.0, T, clamp=(-W, None), record=False)
    xi = Run(c, eta, 0.0, T, contact=True, block=(-W, None), record=False)
    runs = [lower, upper, xi]
    handoffs: List[float] = []

    def watch(t, changes):
        if lower.r != upper.r:
            raise _Retry
        cur = runs[2]
        report.total_checks += 1
        if cur.r == lower.r + 1:
            handoffs.append(t)
            report.total_checks += 1
            if cur.inf != lower.inf | {int(lower.r) + 1}:
                report.add(t, int(lower.r), "hand-off identity fails")
            nxt = Run(c, Configuration.from_sets(lower.inf, default=0), t, T, contact=True,
                      block=(-W, None), record=False)
            if not nxt.r <= cur.r:
                report.add(t, int(nxt.r), "cascade edges not ordered at hand-off")
            runs[2] = nxt
        elif cur.r != lower.r:
            report.add(t, int(lower.r), f"cascade edge {cur.r} differs from rbar {lower.r}")
        return False

    co_step(runs, watch)
    return [(s[0], s[1]) for s in lower.samples], handoffs


def competition_trace(lam: float, mu: float, seed: int, T: float, cascade: bool = True) -> CompetitionTrace:
    """Competitions of the half-line process up to ``T``; the unfinished one at ``T`` is dropped."""
    if lam > mu:
        raise UnsupportedError("the competition construction needs mu >= lambda")
    if lam <= 0 or T < 0:
        raise ParameterError("need lambda > 0 and T >= 0")
    p = ProcessParams(lam, mu)
    c = p.construction(seed, T)
    report = ViolationReport()
    handoffs: List[float] = []
    if cascade:
        W = envelope_width(mu, T)
        for _ in range(MAX_DOUBLINGS):
            report = ViolationReport()
            try:
                samples, handoffs = _cascade_pass(c, T, W, report)
                break
            except _Retry:
                W *= 2
        else:
            raise CertificationError("cascade envelope not certified")
        edge = EdgePath(samples)
    else:
        edge = half_line_edge(p, c, T)
    rbar = _dedupe(zip(edge.times, edge.values))

    N = F = X = D = 0
    ups: List[float] = []
    xbar, tau = 0, 0.0
    nxt = c.next_time
    while tau <= T:
        tl = nxt((LAMBDA, xbar, xbar + 1), tau)
        td = nxt((DELTA, xbar, xbar + 1), tau) if mu > lam else INF
        ts = nxt((RECOVERY, xbar, xbar), tau)
        w = min(tl, td, ts)
        if w > T:
            break
        N += 1
        report.total_checks += 1
        if w == tl:
            X += 1
            xbar += 1
            tau = tl
            if edge.value(tl) != xbar:
                report.add(tl, xbar, "lambda win without an edge step")
        elif w == td:
            F += 1
            ups.append(td)
            tau = td
            if edge.value(td) != xbar:
                report.add(td, xbar, "punch changed the edge")
        else:
            D += 1
            if edge.value(ts) >= xbar:
                report.add(ts, xbar, "recovery win without the edge dropping")
            tau = edge.next_at(xbar, ts)
    report.total_checks += 1
    if X != int(edge.max_on(0.0, T + 1.0)):
        report.add(T, X, f"lambda wins {X} differ from running max {edge.max_on(0.0, T + 1.0)}")
    if cascade:
        report.total_checks += 1
        if handoffs != ups:
            report.add(T, len(ups), f"{len(handoffs)} hand-offs vs {len(ups)} punches")

    R0 = half_line_edge(p, c, T, contact=True)
    R_path = _dedupe(zip(R0.times, R0.values))
    for t, _ in rbar + R_path:
        report.total_checks += 1
        if R0.value(t) < edge.value(t):
            report.add(t, int(edge.value(t)), "R below rbar")
    return CompetitionTrace(T, N, F, X, D, rbar, R_path, ups, handoffs, report)


# ---------------------------------------------------------------------------- reports
class FracpunchReport(NamedTuple):
    ratio: float
    se: float
    target: float
    mean_F: float
    mean_xbar: float
    reps: int

    @property
    def passed(self) -> bool:
        if self.target == 0:
            return self.mean_F == 0
        return abs(self.ratio / self.target - 1.0) <= 0.10


def fracpunch_report(lam: float, mu: float, F: Sequence[int], xbar: Sequence[int]) -> FracpunchReport:
    target = (mu - lam) / lam
    if not any(F) and not any(xbar):
        return FracpunchReport(0.0, 0.0, target, 0.0, 0.0, len(F))
    ratio, se = ratio_of_means(F, xbar)
    return FracpunchReport(ratio, se, target, float(np.mean(F)), float(np.mean(xbar)), len(F))


def verify_fracpunch(lam: float, mu: float, T: float, reps: int, seed: int = 0) -> FracpunchReport:
    """Mean punches over mean lambda wins, against ``(mu - lambda) / lambda``."""
    tr = [competition_trace(lam, mu, derive_seed(seed, i), T, cascade=False) for i in range(reps)]
    return fracpunch_report(lam, mu, [x.F for x in tr], [x.xbar for x in tr])


class GapReport(NamedTuple):
    mean_gap: float
    mean_F: float
    diff: float
    se: float

    @property
    def passed(self) -> bool:
        return self.diff >= -3.0 * self.se


def gap_report(gaps: Sequence[float], F: Sequence[int]) -> GapReport:
    d = np.asarray(gaps, dtype=float) - np.asarray(F, dtype=float)
    m, se = mean_se(d)
    return GapReport(float(np.mean(gaps)), float(np.mean(F)), m, 0.0 if math.isnan(se) else se)


def verify_gap(lam: float, mu: float, T: float, reps: int, seed: int = 0) -> GapReport:
    """``mean(R_T - rbar_T) - mean(F_T)`` with the paired standard error."""
    tr = [competition_trace(lam, mu, derive_seed(seed, i), T, cascade=False) for i in range(reps)]
    return gap_report([x.R_T - x.rbar_T for x in tr], [x.F for x in tr])


class SpeedReport(NamedTuple):
    alpha_hat: float
    alpha_se: float
    beta_hat: float
    beta_se: float
    bound: float
    combined_se: float
    paired_se: float

    @property
    def passed(self) -> bool:
        return self.alpha_hat <= self.bound + 3.0 * self.combined_se


def speed_report(lam: float, mu: float, rbar_T: Sequence[float], R_T: Sequence[float], T: float) -> SpeedReport:
    a = np.asarray(rbar_T, dtype=float) / T
    b = np.asarray(R_T, dtype=float) / T
    am, ase = mean_se(a)
    bm, bse = mean_se(b)
    k = lam / mu
    _, pse = mean_se(a - k * b)
    return SpeedReport(am, ase, bm, bse, k * bm, math.hypot(ase, k * bse), pse)


def speed_inequality(lam: float, mu: float, T: float, reps: int, seed: int = 0) -> SpeedReport:
    """``rbar_T / T`` at ``(lambda, mu)`` against ``(lambda / mu) R_T / T`` for the rate-mu half-line contact process."""
    tr = [competition_trace(lam, mu, derive_seed(seed, i), T, cascade=False) for i in range(reps)]
    return speed_report(lam, mu, [x.rbar_T for x in tr], [x.R_T for x in tr], T)


# ---------------------------------------------------------------------------- subadditivity
def subadditive_replica(lam: float, mu: float, seed: int, s: float, u: float) -> Tuple[int, int, int]:
    """``(xbar_{0,s}, xbar_{s,u}, xbar_{0,u})`` on one construction."""
    if not 0 <= s <= u:
        raise ParameterError("need 0 <= s <= u")
    if lam > mu:
        raise UnsupportedError("subadditivity coupling needs mu >= lambda")
    p = ProcessParams(lam, mu)
    c = p.construction(seed, u)
    edge = half_line_edge(p, c, u)
    x_s = int(max(0.0, edge.max_on(0.0, s) if s > 0 else 0.0, edge.value(s)))
    x_u = int(max(x_s, edge.max_on(0.0, u) if u > 0 else 0.0, edge.value(u)))
    if u > s:
        again = half_line_edge(p, c, u, k=x_s, t0=s)
        x_su = int(max(again.max_on(s, u), again.value(u))) - x_s
    else:
        x_su = 0
    return x_s, x_su, x_u


def subadditivity_check(lam: float, mu: float, s: float, u: float, reps: int, seed: int = 0) -> ViolationReport:
    rep = ViolationReport()
    for i in range(reps):
        a, b, whole = subadditive_replica(lam, mu, derive_seed(seed, i), s, u)
        rep.total_checks += 1
        if a + b < whole:
            rep.add(u, i, f"{a} + {b} < {whole}")
    return rep
