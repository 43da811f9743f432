"""Pathwise coupling checks on a shared construction, the rate-table ordered
coupling, the two-site closed form and the duality Monte Carlo."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .graphical import DELTA, LAMBDA, RECOVERY, Construction, ParameterError, derive_seed
from .processes import (INF, CertificationError, Configuration, ConfigurationError, ProcessParams, Run,
                        Trajectory, _check_params, co_step)


@dataclass
class ViolationReport:
    total_checks: int = 0
    violations: List[Tuple[float, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: "ViolationReport") -> "ViolationReport":
        return ViolationReport(self.total_checks + other.total_checks, self.violations + other.violations)

    def add(self, t: float, x: int, detail: str):
        self.violations.append((t, x, detail))


@dataclass
class CoupledTrajectories:
    trajectories: List[Trajectory]
    shared_seed: int
    report: ViolationReport = field(default_factory=ViolationReport)


def _changed_sites(changes) -> set:
    return {ch[1][0] for ch in changes}


# ---------------------------------------------------------------------------- shared-construction checks
def co_evolve_shared(etas: Sequence[Configuration], p: ProcessParams, c: Construction, T: float) -> CoupledTrajectories:
    """Evolve every start in ``etas`` on ``c``; when mu >= lambda, check that the
    component-wise order of each comparable pair of starts persists."""
    _check_params(p, c)
    runs = [Run(c, eta, 0.0, T) for eta in etas]
    report = ViolationReport()
    pairs = []
    if p.mu >= p.lam:
        pairs = [(i, j) for i in range(len(etas)) for j in range(len(etas)) if i != j and etas[i] <= etas[j]]

    def watch(t, changes):
        for x in _changed_sites(changes):
            for i, j in pairs:
                report.total_checks += 1
                if runs[i].state(x) > runs[j].state(x):
                    report.add(t, x, f"run {i} above run {j}")
        return False

    co_step(runs, watch)
    return CoupledTrajectories([r.trajectory() for r in runs], c.seed, report)


def rightmost_identity_check(p: ProcessParams, c: Construction, T: float,
                             eta_prime: Optional[Configuration] = None) -> ViolationReport:
    """``r_t = r'_t`` and ``zeta^O = zeta^{eta'}`` on ``[l_t, inf)`` while ``I_t`` is nonempty."""
    _check_params(p, c)
    if p.mu < p.lam:
        raise ParameterError("the rightmost identity needs mu >= lambda")
    eta_prime = eta_prime if eta_prime is not None else Configuration({-2: 0, -1: 1, 0: 1})
    if eta_prime.value(0) != 1 or any(eta_prime.value(x) != -1 for x in range(1, eta_prime.hi + 2)) \
            or eta_prime.right_default != -1:
        raise ConfigurationError("eta' must have eta'(0) = 1 and eta'(x) = -1 for x >= 1")
    a = Run(c, Configuration.standard(0), 0.0, T)
    b = Run(c, eta_prime, 0.0, T) if eta_prime.finite_support() else None
    if b is None:
        raise ConfigurationError("use a finite-support eta'")
    report = ViolationReport(1)

    def watch(t, changes):
        if not a.inf:
            return False
        report.total_checks += 1
        if a.r != b.r:
            report.add(t, int(a.r), f"r={a.r} but r'={b.r}")
        for x in _changed_sites(changes):
            if x >= a.l:
                report.total_checks += 1
                if a.state(x) != b.state(x):
                    report.add(t, x, f"state {a.state(x)} vs {b.state(x)}")
        return False

    co_step([a, b], watch)
    return report


def assert_rightmost_identity(a: Trajectory, b: Trajectory) -> ViolationReport:
    """Compare right edges of two trajectories at every sample time where ``a`` is alive."""
    times = sorted({s[0] for s in a.samples} | {s[0] for s in b.samples})
    report = ViolationReport()
    for t in times:
        sa = a.at(t)
        if sa[3] == 0:
            continue
        report.total_checks += 1
        rb = b.r(t)
        if sa[1] != rb:
            report.add(t, int(sa[1]), f"r={sa[1]} but r'={rb}")
    return report


def sandwich_check(p: ProcessParams, c: Construction, T: float, W: Optional[int] = None) -> ViolationReport:
    """``I_t = xi^Z_t restricted to [l_t, r_t]`` at every event time with ``I_t`` nonempty.

    ``xi^Z`` is certified by a lower/upper envelope of half-width ``W``.  With
    ``W`` given, a window too narrow to certify the identity raises
    :class:`CertificationError`; with ``W=None`` the window is doubled until
    certification succeeds.
    """
    _check_params(p, c)
    if p.mu < p.lam:
        raise ParameterError("the sandwich identity needs mu >= lambda")
    auto = W is None
    W = (8 + int(math.ceil(0.6 * p.mu * T))) if auto else W
    for _ in range(8):
        report = _sandwich_once(c, T, W)
        if report is not None:
            return report
        if not auto:
            raise CertificationError(f"window half-width {W} cannot certify xi^Z on [l_t, r_t] up to {T}")
        W *= 2
    raise CertificationError("sandwich envelope did not certify")


def _sandwich_once(c, T, W) -> Optional[ViolationReport]:
    a = Run(c, Configuration.standard(0), 0.0, T)
    eta = Configuration({0: 1}, 1, 1)
    lower = Run(c, eta, 0.0, T, contact=True, block=(-W, W), record=False)
    upper = Run(c, eta, 0.0, T, contact=True, clamp=(-W, W), record=False)
    report = ViolationReport()
    failed = [False]

    def check(t, sites):
        for x in sites:
            if a.l <= x <= a.r:
                lo, up = x in lower.inf, x in upper.inf
                if lo != up:
                    failed[0] = True
                    return True
                report.total_checks += 1
                if (x in a.inf) != lo:
                    report.add(t, x, f"I has {x in a.inf}, xi^Z has {lo}")
        return False

    check(0.0, [0])

    def watch(t, changes):
        if not a.inf:
            return False
        return check(t, _changed_sites(changes))

    co_step([a, lower, upper], watch)
    return None if failed[0] else report


def domination_check(p: ProcessParams, c: Construction, T: float) -> ViolationReport:
    """``zeta^O >= zeta^{[eta_k, tau_k]}`` after each first hitting time ``tau_k`` of level ``k``."""
    _check_params(p, c)
    if p.mu < p.lam:
        raise ParameterError("the domination lemma needs mu >= lambda")
    a = Run(c, Configuration.standard(0), 0.0, T, record=False)
    runs = [a]
    launched: List[Run] = []
    report = ViolationReport()
    top = [0]

    def watch(t, changes):
        sites = _changed_sites(changes)
        while a.inf and a.r > top[0]:
            top[0] += 1
            k = top[0]
            if a.r != k:
                report.add(t, k, "edge skipped a level")
            z = Run(c, Configuration.standard(k), t, T, record=False)
            launched.append(z)
            runs.append(z)
            sites.add(k)
        for z in launched:
            if z.died_at is not None and z.died_at < t:
                continue
            for x in sites:
                report.total_checks += 1
                if z.state(x) > a.state(x):
                    report.add(t, x, f"restart from {z.samples[0][1]} above zeta^O")
        return False

    co_step(runs, watch)
    return report


def random_ordered_pair(seed: int, half_width: int = 5) -> Tuple[Configuration, Configuration]:
    """A random pair ``eta <= eta'`` on ``[-half_width, half_width]`` with ``eta(0) = 1``, never infected outside."""
    rng = random.Random(seed)
    lo, hi = {}, {}
    for x in range(-half_width, half_width + 1):
        a = rng.choice((-1, 0, 1))
        b = rng.choice([v for v in (-1, 0, 1) if v >= a])
        lo[x], hi[x] = a, b
    lo[0] = hi[0] = 1
    return Configuration(lo), Configuration(hi)


def shared_checks(p: ProcessParams, seed: int, T: float) -> Dict[str, ViolationReport]:
    """All pathwise identities on one construction: rightmost identity, sandwich,
    order of a random ordered pair of starts, and domination by restarts."""
    c = p.construction(seed, T)
    eta, eta2 = random_ordered_pair(derive_seed(seed, 0x0D))
    return {
        "rightmost": rightmost_identity_check(p, c, T),
        "sandwich": sandwich_check(p, c, T),
        "order": co_evolve_shared([eta, eta2], p, c, T).report,
        "domination": domination_check(p, c, T),
    }


# ---------------------------------------------------------------------------- ordered coupling
def _pair_rates(up: int, lo: int, n: int, n2: int, p: ProcessParams, p2: ProcessParams):
    lam, mu, lam2, mu2 = p.lam, p.mu, p2.lam, p2.mu
    if (up, lo) == (0, -1):
        return [(lam * n, (1, 1)), (mu2 * n2 - lam * n, (1, -1))]
    if (up, lo) == (-1, -1):
        return [(lam * n, (1, 1)), (lam2 * n2 - lam * n, (1, -1))]
    if (up, lo) == (0, 0):
        return [(mu * n, (1, 1)), (mu2 * n2 - mu * n, (1, 0))]
    if (up, lo) == (1, -1):
        return [(lam * n, (1, 1)), (1.0, (0, -1))]
    if (up, lo) == (1, 0):
        return [(mu * n, (1, 1)), (1.0, (0, 0))]
    if (up, lo) == (1, 1):
        return [(1.0, (0, 0))]
    raise ValueError(f"pair state {(up, lo)} violates the order")


def co_evolve_ordered(eta: Configuration, eta2: Configuration, p: ProcessParams, p2: ProcessParams,
                      seed: int, T: float, sample_times: Sequence[float] = ()) -> CoupledTrajectories:
    """Joint chain of ``(zeta'(x), zeta(x))`` with exactly the ordered-coupling rate table.

    ``zeta`` runs at ``p`` from ``eta`` and ``zeta'`` at ``p2`` from ``eta2``.
    The chain is simulated by exponential competition among all enabled
    pair transitions; order is asserted after every transition.
    ``report`` counts transitions as checks.  Snapshots of both marginals are
    stored at ``sample_times``.
    """
    if not (p.lam <= p2.lam and p.mu <= p2.mu and p2.mu >= p.lam):
        raise ParameterError("need lambda <= lambda', mu <= mu' and mu' >= lambda")
    if p.M != 1 or p2.M != 1:
        raise ParameterError("the ordered coupling is nearest-neighbour")
    if not (eta <= eta2) or not (eta.finite_support() and eta2.finite_support()):
        raise ParameterError("need eta <= eta2 with finite infected support")
    if eta.left_default != eta2.left_default or eta.right_default != eta2.right_default:
        raise ParameterError("defaults of the two starts must agree")
    rng = random.Random(derive_seed(seed, 0x0C0))
    sites = set(eta.window) | set(eta2.window)
    lo_st = {x: eta.value(x) for x in sites}
    up_st = {x: eta2.value(x) for x in sites}
    dflt_lo = lambda x: eta.value(x)
    dflt_up = lambda x: eta2.value(x)
    report = ViolationReport()
    snaps_lo: Dict[float, Configuration] = {}
    snaps_up: Dict[float, Configuration] = {}
    pending = sorted(t for t in sample_times if 0 <= t <= T)
    samples_lo = [(0.0,) + _summ(lo_st)]
    samples_up = [(0.0,) + _summ(up_st)]

    def g(st, d, x):
        v = st.get(x)
        return d(x) if v is None else v

    t = 0.0
    while True:
        events = []
        total = 0.0
        active = {y for x, v in up_st.items() if v == 1 for y in (x - 1, x, x + 1)}
        for x in sorted(active):
            a, b = g(up_st, dflt_up, x), g(lo_st, dflt_lo, x)
            n = (g(lo_st, dflt_lo, x - 1) == 1) + (g(lo_st, dflt_lo, x + 1) == 1)
            n2 = (g(up_st, dflt_up, x - 1) == 1) + (g(up_st, dflt_up, x + 1) == 1)
            for rate, new in _pair_rates(a, b, n, n2, p, p2):
                if rate < -1e-12:
                    report.add(t, x, f"negative rate {rate}")
                if rate > 0:
                    events.append((rate, x, new))
                    total += rate
        dt = rng.expovariate(total) if total > 0 else INF
        while pending and pending[0] < t + dt:
            s = pending.pop(0)
            snaps_lo[s] = _config(lo_st, eta)
            snaps_up[s] = _config(up_st, eta2)
        if t + dt > T:
            break
        t += dt
        u = rng.random() * total
        acc = 0.0
        for rate, x, new in events:
            acc += rate
            if u < acc:
                break
        up_st[x], lo_st[x] = new
        report.total_checks += 1
        if new[1] > new[0]:
            report.add(t, x, "order lost")
        samples_lo.append((t,) + _summ(lo_st))
        samples_up.append((t,) + _summ(up_st))
    tr_lo = Trajectory(samples_lo, snaps_lo, _death(samples_lo), frozenset(), T)
    tr_up = Trajectory(samples_up, snaps_up, _death(samples_up), frozenset(), T)
    return CoupledTrajectories([tr_lo, tr_up], seed, report)


def _summ(st):
    inf = [x for x, v in st.items() if v == 1]
    if not inf:
        return (-INF, INF, 0)
    return (max(inf), min(inf), len(inf))


def _death(samples):
    for s in samples:
        if s[3] == 0:
            return s[0]
    return None


def _config(st, eta):
    w = dict(st) if st else {0: eta.value(0)}
    return Configuration(w, eta.left_default, eta.right_default)


# ---------------------------------------------------------------------------- two sites
def two_site_exact(lam: float, t: float) -> float:
    """P(both sites infected at t) for the (lam, 0) process on two sites from one seed."""
    if lam < 0 or t < 0:
        raise ParameterError("need lambda >= 0 and t >= 0")
    if abs(lam - 1.0) < 1e-9:
        # series of (1 - e^{-x})/x around x = 0 keeps the limit t e^{-2t} smooth
        x = t * (lam - 1.0)
        return math.exp(-2 * t) * lam * t * (1 - x / 2 + x * x / 6)
    return math.exp(-2 * t) * lam / (lam - 1) * (1 - math.exp(-t * (lam - 1)))


def two_site_mc(lam: float, t: float, reps: int, seed: int, start: str = "u") -> Tuple[float, float]:
    """Fraction of runs of the (lam, 0) process on sites {0, 1} in state (1, 1) at ``t``.

    ``start`` is ``"u"`` (site 0 infected) or ``"V"`` (both infected).
    Returns ``(estimate, standard error)``.
    """
    hits = sum(two_site_replica(lam, t, derive_seed(seed, i), start) for i in range(reps))
    phat = hits / reps if reps else math.nan
    return phat, math.sqrt(phat * (1 - phat) / reps) if reps else math.nan


def two_site_replica(lam: float, t: float, seed: int, start: str = "u") -> bool:
    """One run of the (lam, 0) process on ``{0, 1}``: is it in state (1, 1) at ``t``?"""
    if start not in ("u", "V"):
        raise ParameterError("start must be 'u' or 'V'")
    c = Construction.for_params(seed, lam, 0.0, t)
    nxt = c.next_time
    if nxt((RECOVERY, 0, 0), 0.0) <= t:
        return False
    if start == "V":
        return nxt((RECOVERY, 1, 1), 0.0) > t
    # site 0 stays infected throughout, so site 1 is (1) iff its first arrow came and it has not recovered since
    kind = LAMBDA if c.delta_target == 0 else DELTA
    x = nxt((kind, 0, 1), 0.0)
    return x <= t and nxt((RECOVERY, 1, 1), x) > t


def two_site_run(lam: float, t: float, seed: int, start: str = "u") -> bool:
    """:func:`two_site_replica` by event-driven simulation (reference for the direct read-off)."""
    eta = Configuration({0: 1, 1: -1}) if start == "u" else Configuration({0: 1, 1: 1})
    c = Construction.for_params(seed, lam, 0.0, t)
    r = Run(c, eta, 0.0, t, block=(0, 1), record=False).run()
    return r.state(0) == 1 and r.state(1) == 1


# ---------------------------------------------------------------------------- duality
def duality_hit(A: Iterable[int], B: Iterable[int], mu: float, t: float, seed: int) -> bool:
    """Does the contact process from ``A`` meet ``B`` at time ``t``?"""
    return _hits(sorted(set(A)), sorted(set(B)), mu, t, seed)


def _hits(A, B, mu, t, seed) -> bool:
    c = Construction.for_params(seed, mu, mu, t)
    r = Run(c, Configuration.from_sets(A, default=0), 0.0, t, contact=True, record=False).run()
    return any(x in r.inf for x in B)


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> float:
    p = (k1 + k2) / (n1 + n2)
    var = p * (1 - p) * (1 / n1 + 1 / n2)
    return 0.0 if var == 0 else (k1 / n1 - k2 / n2) / math.sqrt(var)


def check_duality(A: Iterable[int], B: Iterable[int], mu: float, t: float, reps: int,
                  seed: int = 0) -> Tuple[float, float, float]:
    """Independent estimates of ``P(xi^A_t meets B)`` and ``P(xi^B_t meets A)`` and their pooled z."""
    A, B = sorted(set(A)), sorted(set(B))
    if not A or not B:
        raise ParameterError("A and B must be nonempty")
    if reps < 1:
        raise ParameterError("reps must be positive")
    k1 = sum(_hits(A, B, mu, t, derive_seed(seed, 1, i)) for i in range(reps))
    k2 = sum(_hits(B, A, mu, t, derive_seed(seed, 2, i)) for i in range(reps))
    return k1 / reps, k2 / reps, two_proportion_z(k1, reps, k2, reps)


def ordered_replica(p: ProcessParams, p2: ProcessParams, seed: int, T: float) -> ViolationReport:
    """Ordered coupling from a random ordered pair of starts; the report counts transitions."""
    eta, eta2 = random_ordered_pair(derive_seed(seed, 0x0D))
    return co_evolve_ordered(eta, eta2, p, p2, seed, T).report


def marginal_replica(p: ProcessParams, p2: ProcessParams, seed: int, t: float) -> Tuple[int, int]:
    """Site-0 state at ``t`` of the lower marginal of the ordered coupling and of a direct
    run of ``p`` from the same start (independent randomness)."""
    eta, eta2 = Configuration.standard(0), Configuration({0: 1, 1: 1})
    tr = co_evolve_ordered(eta, eta2, p, p2, seed, t, [t]).trajectories[0]
    coupled = tr.snapshots[t].value(0)
    c = p.construction(derive_seed(seed, 0xD1), t)
    direct = Run(c, eta, 0.0, t, record=False).run().state(0)
    return coupled, direct
