"""Experiment registry: typed parameters, deterministic replica fan-out, reductions and file outputs.

Every experiment is a list of replica *kinds*.  Replica ``i`` of kind ``k``
gets the seed ``derive_seed(master, crc32(k), i)``, so adding replicas never
perturbs existing ones and the worker count never changes a result.
Replicas emit table rows; summaries and flags are computed from the tables
alone.
"""
from __future__ import annotations

import csv
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .coupling import (duality_hit, marginal_replica, ordered_replica, shared_checks, two_proportion_z,
                       two_site_exact, two_site_replica)
from .graphical import derive_seed
from .percolation import (GrowthPoint, Independent, Overlap, final_rows, generate_field, growth_fit, percolate,
                          restriction_field_check, window)
from .processes import ProcessParams
from .regeneration import (RegenRecord, clt_diagnostic, convergence_report, cse_curve,
                           cse_regeneration, cse_replica, estimate_alpha, estimate_sigma2, find_break_points,
                           growth_replica, growth_report, half_line_edge, theta_from_replicas, theta_replica,
                           void_from_replicas, void_replica, zeta_void_replica)
from .speedcomp import competition_trace, fracpunch_report, gap_report, speed_report, subadditive_replica
from .stats import (InsufficientDataError, kendall_trend, ks_halves, lag1_autocorrelation,
                    mean_se, proportion)
from .subcritical import (DecayFit, containment_replica, lifetime_fit, lifetime_replica,
                          pilot_horizon, range_fit, range_replica)

INSUFFICIENT = "insufficient data"


class UsageError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------- parameters
def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    v = float(s.strip())
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _list(item: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(s: str) -> List[Any]:
        parts = [x for x in s.replace(" ", "").split(",") if x]
        return [item(x) for x in parts]
    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        v = s.strip().lower()
        if v not in options:
            raise ValueError(s)
        return v
    return parse


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, list):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable[[str], Any]
    default: Any
    rule: str = ""
    check: Optional[Callable[[Any], bool]] = None
    doc: str = ""


def nonneg(name, default, doc="", kind=float):
    return Param(name, _int if kind is int else _float, default, ">= 0", lambda v: v >= 0, doc)


def positive(name, default, doc="", kind=float):
    return Param(name, _int if kind is int else _float, default, "> 0", lambda v: v > 0, doc)


def unit(name, default, doc=""):
    return Param(name, _float, default, "in [0, 1]", lambda v: 0 <= v <= 1, doc)


def reps(default, name="reps", doc="replicas"):
    return Param(name, _int, default, ">= 0", lambda v: v >= 0, doc)


def grid(name, default, doc="", kind=float, lo=0):
    parse = _list(_int if kind is int else _float)
    return Param(name, parse, default, f"nonempty list of values >= {lo}",
                 lambda v: bool(v) and all(x >= lo for x in v), doc)


def ints(name, default, doc=""):
    return Param(name, _list(_int), default, "nonempty integer list", lambda v: bool(v), doc)


# ---------------------------------------------------------------------------- tables and summaries
@dataclass(frozen=True)
class Table:
    name: str
    columns: Tuple[Tuple[str, str], ...]

    @property
    def header(self) -> List[str]:
        return [c for c, _ in self.columns]


def table(name: str, spec: str) -> Table:
    """``spec`` is ``"col:type col:type ..."`` with types int, float or str."""
    return Table(name, tuple(tuple(c.split(":")) for c in spec.split()))


class Summary:
    def __init__(self):
        self.estimates: Dict[str, Any] = {}
        self.flags: Dict[str, Any] = {}
        self.tables: Dict[str, List[tuple]] = {}

    def put(self, **kv):
        self.estimates.update(kv)

    def flag(self, name: str, ok: bool):
        self.flags[name] = bool(ok)

    @contextmanager
    def section(self, *flags: str) -> Iterator[None]:
        """Flags not set because data ran out are marked insufficient."""
        try:
            yield
        except InsufficientDataError:
            for f in flags:
                self.flags.setdefault(f, INSUFFICIENT)


def need(ok: bool, what: str):
    if not ok:
        raise InsufficientDataError(what)


Rows = Dict[str, List[tuple]]


@dataclass(frozen=True)
class Experiment:
    name: str
    doc: str
    params: Tuple[Param, ...]
    tables: Tuple[Table, ...]
    plan: Callable[[Mapping[str, Any]], List[Tuple[str, int, int]]]
    replica: Callable[[Mapping[str, Any], str, List[int], List[int]], List[Tuple[str, tuple]]]
    reduce: Callable[[Mapping[str, Any], Rows, Summary], None]
    derived: Tuple[Table, ...] = ()
    validate: Optional[Callable[[Mapping[str, Any]], None]] = None
    prepare: Optional[Callable[[Dict[str, Any], int], None]] = None

    @property
    def param_map(self) -> Dict[str, Param]:
        return {p.name: p for p in self.params}


EXPERIMENTS: Dict[str, Experiment] = {}


def register(exp: Experiment) -> Experiment:
    EXPERIMENTS[exp.name] = exp
    return exp


def _pp(p: Mapping[str, Any]) -> ProcessParams:
    return ProcessParams(p["lam"], p["mu"])


def _mu_ge_lam(p):
    if not p["mu"] >= p["lam"] > 0:
        raise UsageError("mu", "this experiment needs mu >= lam > 0")


def _records_rows(rep: int, records: Sequence[RegenRecord]) -> List[tuple]:
    out, tau = [], 0.0
    for j, r in enumerate(records):
        tau += r.Psi
        out.append((rep, j, r.X, r.Psi, r.Mback, tau, int(r.censored)))
    return out


def _as_records(rows: Sequence[tuple], t_max: float = math.inf) -> List[RegenRecord]:
    """Complete records (rows ``rep j X Psi Mback tau censored``) ending by ``t_max``."""
    return [RegenRecord(int(r[2]), float(r[3]), int(r[4]), False) for r in rows if not r[6] and r[5] <= t_max]


RECORDS = "rep:int j:int X:int Psi:float Mback:int tau:float censored:int"


# ---------------------------------------------------------------------------- two-site
def _two_site_reduce(p, rows, s: Summary):
    lam, t = p["lam"], p["t"]
    exact = two_site_exact(lam, t)
    e2 = math.exp(-2 * t)
    s.put(exact=exact, e_minus_2t=e2,
          threshold_t=1.0 if lam == 1 else (math.log(lam) / (lam - 1) if lam > 0 else math.nan))
    with s.section("closed_form", "v_matches", "witness"):
        u = [r[2] for r in rows["replicas"] if r[0] == "u"]
        v = [r[2] for r in rows["replicas"] if r[0] == "V"]
        need(len(u) > 0 and len(v) > 0, "no replicas")
        pu, pv = proportion(sum(u), len(u)), proportion(sum(v), len(v))
        s.put(p_u=pu.p, se_u=pu.se, p_V=pv.p, se_V=pv.se)
        s.flag("closed_form", abs(pu.p - exact) <= 3 * pu.se)
        s.flag("v_matches", abs(pv.p - e2) <= 3 * pv.se)
        s.flag("witness", exact > e2 and pv.p + 3 * pv.se < exact)


register(Experiment(
    "two-site", "(lambda, 0) process on two sites: closed form and the ordered-coupling counterexample.",
    (nonneg("lam", 2.0, "first-infection rate"), nonneg("t", 1.0, "time"), reps(100000, doc="replicas per start")),
    (table("replicas", "start:str i:int hit:int"),),
    lambda p: [("u", p["reps"], 512), ("V", p["reps"], 512)],
    lambda p, kind, seeds, idx: [("replicas", (kind, i, int(two_site_replica(p["lam"], p["t"], s, kind))))
                                 for s, i in zip(seeds, idx)],
    _two_site_reduce,
))


# ---------------------------------------------------------------------------- couple-check
CHECKS = ("rightmost", "sandwich", "order", "domination")


def _couple_replica(p, kind, seeds, idx):
    out = []
    lo, hi = ProcessParams(p["lam_lo"], p["mu_lo"]), ProcessParams(p["lam_hi"], p["mu_hi"])
    for s, i in zip(seeds, idx):
        if kind == "shared":
            reps_ = shared_checks(_pp(p), s, p["T"])
            row = [i]
            for k in CHECKS:
                row += [reps_[k].total_checks, len(reps_[k].violations)]
            out.append(("shared", tuple(row)))
        elif kind == "ordered":
            r = ordered_replica(lo, hi, s, p["ordered_T"])
            out.append(("ordered", (i, r.total_checks, len(r.violations))))
        else:
            a, b = marginal_replica(lo, hi, s, p["marginal_t"])
            out.append(("marginal", (i, a, b)))
    return out


def _couple_validate(p):
    _mu_ge_lam(p)
    if not (p["lam_lo"] <= p["lam_hi"] and p["mu_lo"] <= p["mu_hi"] and p["mu_hi"] >= p["lam_lo"]):
        raise UsageError("lam_hi", "need lam_lo <= lam_hi, mu_lo <= mu_hi and mu_hi >= lam_lo")


def _couple_reduce(p, rows, s: Summary):
    with s.section(*CHECKS):
        sh = rows["shared"]
        need(len(sh) > 0, "no shared replicas")
        for j, k in enumerate(CHECKS):
            checks = sum(r[1 + 2 * j] for r in sh)
            viol = sum(r[2 + 2 * j] for r in sh)
            s.put(**{f"{k}_checks": checks, f"{k}_violations": viol})
            s.flag(k, viol == 0 and checks > 0)
    with s.section("ordered"):
        od = rows["ordered"]
        need(len(od) > 0, "no ordered replicas")
        viol = sum(r[2] for r in od)
        s.put(ordered_transitions=sum(r[1] for r in od), ordered_violations=viol)
        s.flag("ordered", viol == 0)
    with s.section("marginal"):
        mg = rows["marginal"]
        need(len(mg) > 0, "no marginal replicas")
        n = len(mg)
        k1, k2 = sum(r[1] == 1 for r in mg), sum(r[2] == 1 for r in mg)
        z = two_proportion_z(k1, n, k2, n)
        s.put(coupled_occupancy=k1 / n, direct_occupancy=k2 / n, marginal_z=z)
        s.flag("marginal", abs(z) <= 3)


register(Experiment(
    "couple-check", "Pathwise identities on shared constructions and the ordered rate-table coupling.",
    (positive("lam", 1.0), positive("mu", 2.0), nonneg("T", 20.0, "horizon of the shared checks"),
     reps(1000, doc="shared-construction replicas"),
     reps(1000, "ordered_reps", "ordered-coupling runs from random ordered starts"),
     nonneg("ordered_T", 20.0, "horizon of each ordered-coupling run"),
     nonneg("lam_lo", 0.5), nonneg("mu_lo", 1.0), nonneg("lam_hi", 1.0), nonneg("mu_hi", 2.0),
     nonneg("marginal_t", 1.0, "time of the marginal occupancy check"),
     reps(100000, "marginal_reps", "replicas of the marginal occupancy check")),
    (table("shared", "i:int " + " ".join(f"{k}_checks:int {k}_violations:int" for k in CHECKS)),
     table("ordered", "i:int transitions:int violations:int"),
     table("marginal", "i:int coupled_state:int direct_state:int")),
    lambda p: [("shared", p["reps"], 1), ("ordered", p["ordered_reps"], 16),
               ("marginal", p["marginal_reps"], 512)],
    _couple_replica, _couple_reduce, validate=_couple_validate,
))


# ---------------------------------------------------------------------------- breakpoints
def _bp_replica(p, kind, seeds, idx):
    pp = _pp(p)
    out = []
    for s, i in zip(seeds, idx):
        T, TL, S = p["T"], p["T_long"], p["S"]
        c = pp.construction(s, TL + S)
        edge = half_line_edge(pp, c, TL + S)
        recs = find_break_points(pp, s, TL, S, c=c, edge=edge)
        out += [("records", r) for r in _records_rows(i, recs)]
        out.append(("edges", (i, edge.value(T), edge.value(TL))))
    return out


def _bp_validate(p):
    _mu_ge_lam(p)
    if p["T_long"] < p["T"]:
        raise UsageError("T_long", "must be >= T")


def _bp_reduce(p, rows, s: Summary):
    T, TL, level = p["T"], p["T_long"], p["level"]
    short = _as_records(rows["records"], T)
    s.put(records=len(short))
    with s.section("records"):
        need(len(rows["edges"]) > 0, "no constructions")
        s.flag("records", len(short) >= p["min_records"])
    with s.section("ks_X", "ks_Psi", "sigma2_positive", "clt"):
        need(len(short) >= 10, "fewer than 10 records")
        _, pX = ks_halves([r.X for r in short])
        _, pP = ks_halves([r.Psi for r in short])
        s.put(ks_X_p=pX, ks_Psi_p=pP, lag1_X=lag1_autocorrelation([r.X for r in short]),
              lag1_Psi=lag1_autocorrelation([r.Psi for r in short]),
              mback_mean=float(np.mean([r.Mback for r in short])), mback_max=max(r.Mback for r in short))
        s.flag("ks_X", pX > level)
        s.flag("ks_Psi", pP > level)
        a = estimate_alpha(short, min_records=2)
        sig2 = estimate_sigma2(short, a.alpha_hat, min_records=2)
        s.put(alpha_hat=a.alpha_hat, alpha_se=a.se, sigma2_hat=sig2)
        s.flag("sigma2_positive", sig2 > 0)
        clt = clt_diagnostic(short, a.alpha_hat, sig2, min_records=min(p["min_records"], 25))
        s.put(clt_p=clt.p_value, clt_blocks=clt.n_blocks, clt_block_size=clt.block_size)
        s.flag("clt", clt.p_value > level)
    with s.section("alpha_agree"):
        ed = rows["edges"]
        need(len(ed) >= 2, "fewer than 2 constructions")
        long = _as_records(rows["records"], TL)
        need(len(long) >= 2, "fewer than 2 long-horizon records")
        al = estimate_alpha(long, min_records=2)
        d_long, d_long_se = mean_se([r[2] / TL for r in ed])
        d_short, d_short_se = mean_se([r[1] / T for r in ed])
        rel = al.alpha_hat / d_long - 1
        s.put(alpha_long=al.alpha_hat, alpha_long_se=al.se, direct_long=d_long, direct_long_se=d_long_se,
              direct_T=d_short, direct_T_se=d_short_se, alpha_rel_diff=rel)
        s.flag("alpha_agree", abs(rel) < p["tol"])


register(Experiment(
    "breakpoints", "Break points of the half-line edge: i.i.d. checks, speed, variance and CLT.",
    (positive("lam", 1.0), positive("mu", 2.0), positive("T", 200.0, "record horizon"),
     nonneg("S", 30.0, "survival look-ahead for accepting a break point"),
     positive("T_long", 1000.0, "horizon of the speed comparison"),
     reps(30, doc="independent constructions"),
     nonneg("min_records", 200, "records needed on [0, T]", kind=int),
     unit("level", 0.01, "test level"), positive("tol", 0.05, "relative speed tolerance")),
    (table("records", RECORDS), table("edges", "rep:int rbar_T:float rbar_T_long:float")),
    lambda p: [("edge", p["reps"], 1)],
    _bp_replica, _bp_reduce, validate=_bp_validate,
))


# ---------------------------------------------------------------------------- lln-clt
def _lln_replica(p, kind, seeds, idx):
    pp = _pp(p)
    out = []
    for s, i in zip(seeds, idx):
        if kind == "growth":
            g = growth_replica(pp, s, p["T"])
            out.append(("growth", (i, int(g is not None), math.nan if g is None else g)))
        elif kind == "theta":
            out.append(("theta", (i,) + tuple(theta_replica(p["mu"], s, p["theta_window"], p["theta_T"]))))
        else:
            recs = find_break_points(pp, s, p["alpha_T"], p["S"])
            out += [("records", r) for r in _records_rows(i, recs)]
    return out


def _lln_reduce(p, rows, s: Summary):
    with s.section("growth_lln"):
        sizes = [r[2] for r in rows["growth"] if r[1]]
        s.put(survivors=len(sizes), growth_reps=len(rows["growth"]))
        need(len(rows["theta"]) >= 2, "fewer than 2 density replicas")
        th = theta_from_replicas([r[1:] for r in rows["theta"]])
        s.put(theta=th.theta, theta_se=th.se, theta_left=th.left, theta_right=th.right,
              theta_halves_se=th.halves_se, theta_early=th.early, theta_early_se=th.early_se)
        recs = _as_records(rows["records"])
        need(len(recs) >= 2, "fewer than 2 records")
        a = estimate_alpha(recs, min_records=2)
        s.put(alpha_hat=a.alpha_hat, alpha_se=a.se, alpha_records=a.n_records)
        g = growth_report(sizes, (a.alpha_hat, a.se), (th.theta, th.se))
        s.put(size_rate=g.size_rate, size_rate_se=g.size_rate_se, predicted=g.predicted,
              predicted_se=g.predicted_se, rel_diff=g.rel_diff)
        s.flag("growth_lln", abs(g.rel_diff) < p["tol"])


register(Experiment(
    "lln-clt", "Growth of the infected set against twice the edge speed times the invariant density.",
    (positive("lam", 1.0), positive("mu", 2.0), positive("T", 200.0, "growth horizon"),
     reps(400, doc="zeta^O replicas"), positive("theta_window", 80, "initial density window", kind=int),
     positive("theta_T", 50.0, "density horizon"), reps(80, "theta_reps", "density replicas"),
     positive("alpha_T", 200.0, "break-point horizon"), reps(120, "alpha_reps", "break-point constructions"),
     nonneg("S", 30.0, "break-point survival look-ahead"), positive("tol", 0.10, "relative tolerance")),
    (table("growth", "i:int alive:int size_rate:float"),
     table("theta", "i:int central:float left:float right:float early:float window:int"),
     table("records", RECORDS)),
    lambda p: [("growth", p["reps"], 1), ("theta", p["theta_reps"], 1), ("alpha", p["alpha_reps"], 1)],
    _lln_replica, _lln_reduce, validate=_mu_ge_lam,
))


# ---------------------------------------------------------------------------- complete-conv
def _cc_replica(p, kind, seeds, idx):
    if kind == "zeta":
        pp = _pp(p)
        return [("zeta", (i,) + tuple(int(v) for v in zeta_void_replica(pp, p["F"], p["t"], s)))
                for s, i in zip(seeds, idx)]
    return [("void", (i,) + tuple(void_replica(p["mu"], p["F"], p["t"], s))) for s, i in zip(seeds, idx)]


def _cc_reduce(p, rows, s: Summary):
    with s.section("convergence"):
        z, v = rows["zeta"], rows["void"]
        need(len(z) > 0 and len(v) >= 2, "too few replicas")
        alive = sum(r[1] for r in z)
        void_alive = sum(r[1] and r[2] for r in z)
        rep = convergence_report(alive, void_alive, len(z), void_from_replicas([(r[1], r[2]) for r in v]))
        s.put(lhs=rep.lhs, rhs=rep.rhs, diff=rep.diff, se=rep.se, beta=rep.beta,
              void_among_survivors=rep.void_alive, phi=rep.phi)
        # survivors whose edges have not yet passed F carry the finite-t bias
        inside = [r for r in z if r[3]]
        if alive:
            s.put(edge_share=1 - len(inside) / alive)
        if inside:
            s.put(void_inside=sum(r[2] for r in inside) / len(inside))
        s.flag("convergence", abs(rep.diff) <= p["z"] * rep.se)


register(Experiment(
    "complete-conv", "P(I_t misses F) against the extinction/invariant-measure mixture.",
    (positive("lam", 1.0), positive("mu", 2.0), ints("F", [-1, 0, 1], "finite set of sites"),
     nonneg("t", 40.0, "time"), reps(2000, doc="zeta^O replicas"),
     reps(40, "void_reps", "all-infected replicas for the void probability"),
     positive("z", 3.0, "tolerance in combined standard errors")),
    (table("zeta", "i:int alive:int missed:int inside:int"), table("void", "i:int fraction:float positions:int")),
    lambda p: [("zeta", p["reps"], 16), ("void", p["void_reps"], 1)],
    _cc_replica, _cc_reduce, validate=_mu_ge_lam,
))


# ---------------------------------------------------------------------------- subcritical
def _fit_flags(s: Summary, fit: DecayFit, r2_min: float):
    s.put(slope=fit.slope, slope_se=fit.slope_se, intercept=fit.intercept, r2=fit.r2)
    s.flag("slope_negative", fit.slope < 0)
    s.flag("fit_r2", fit.r2 > r2_min)


def _range_validate(p):
    if p["n_max"] < 3:
        raise UsageError("n_max", "must be >= 3 for a fit")


def _range_reduce(p, rows, s: Summary):
    with s.section("slope_negative", "fit_r2", "tail", "nonincreasing"):
        rr = rows["replicas"]
        need(len(rr) > 0, "no replicas")
        fit = range_fit([r[1] for r in rr], p["n_max"], sum(1 - r[2] for r in rr))
        s.tables["levels"] = [(int(x), ph, se) for x, ph, se in fit.levels]
        _fit_flags(s, fit, p["r2_min"])
        s.put(p_n_max=fit.levels[-1][1], unfinished=fit.unfinished)
        s.flag("tail", fit.levels[-1][1] < p["p_max"])
        s.flag("nonincreasing", fit.nonincreasing())


register(Experiment(
    "subcritical-range", "Decay of the range reached from one seed in the subcritical regime.",
    (nonneg("lam", 0.25), nonneg("mu", 0.25), reps(100000), positive("n_max", 10, "largest level", kind=int),
     positive("horizon", 10000.0, "time cap per run"), unit("p_max", 0.01, "bound on the top level"),
     unit("r2_min", 0.95, "minimum fit r^2")),
    (table("replicas", "i:int range:int died:int"),),
    lambda p: [("range", p["reps"], 256)],
    lambda p, kind, seeds, idx: [("replicas", (i,) + tuple(int(v) for v in range_replica(_pp(p), s, p["horizon"])))
                                 for s, i in zip(seeds, idx)],
    _range_reduce, derived=(table("levels", "n:int p_hat:float se:float"),),
    validate=_range_validate,
))


def _life_validate(p):
    if len(set(p["t_grid"])) < 6:
        raise UsageError("t_grid", "needs at least 6 distinct points")


def _life_reduce(p, rows, s: Summary):
    with s.section("slope_negative", "fit_r2"):
        rr = rows["replicas"]
        need(len(rr) > 0, "no replicas")
        fit = lifetime_fit([r[1] for r in rr], p["t_grid"])
        s.tables["levels"] = list(fit.levels)
        _fit_flags(s, fit, p["r2_min"])


register(Experiment(
    "subcritical-lifetime", "Exponential tail of the extinction time in the subcritical regime.",
    (nonneg("lam", 0.25), nonneg("mu", 0.25), reps(100000),
     grid("t_grid", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], "survival times (>= 6 points)"),
     unit("r2_min", 0.9, "minimum fit r^2")),
    (table("replicas", "i:int death_time:float"),),
    lambda p: [("lifetime", p["reps"], 256)],
    lambda p, kind, seeds, idx: [("replicas", (i, lifetime_replica(_pp(p), s, max(p["t_grid"]))))
                                 for s, i in zip(seeds, idx)],
    _life_reduce, derived=(table("levels", "t:float p_hat:float se:float"),),
    validate=_life_validate,
))


def _cont_prepare(p: Dict[str, Any], master: int):
    p["S_used"] = p["S"] if p["S"] > 0 else pilot_horizon(_pp(p), max(p["N_grid"]), p["pilot_reps"],
                                                           seed=derive_seed(master, stream_id("pilot")))


def _cont_replica(p, kind, seeds, idx):
    N = int(kind[1:])
    return [("replicas", (N, i) + tuple(int(v) for v in containment_replica(_pp(p), N, s, p["S_used"])))
            for s, i in zip(seeds, idx)]


def _cont_reduce(p, rows, s: Summary):
    s.put(S=p.get("S_used", math.nan))
    with s.section("all_positive", "no_downward_trend"):
        rr = rows["replicas"]
        need(len(rr) > 0, "no replicas")
        levels, eps = [], []
        for N in p["N_grid"]:
            sub = [r for r in rr if r[0] == N]
            need(len(sub) > 0, f"no replicas for N={N}")
            pr = proportion(sum(r[2] for r in sub), len(sub))
            lo, hi = pr.ci()
            levels.append((N, pr.p, pr.se, lo, hi, sum(1 - r[3] for r in sub)))
            eps.append(pr.p)
        s.tables["levels"] = levels
        tau, pv = kendall_trend(list(p["N_grid"]), eps) if len(eps) >= 2 else (0.0, 1.0)
        s.put(min_eps=min(eps), kendall_tau=tau, kendall_p=pv, alive_at_S=sum(r[5] for r in levels))
        s.flag("all_positive", all(r[3] > 0 for r in levels))
        s.flag("no_downward_trend", not (tau < 0 and pv < p["level"]))


register(Experiment(
    "containment", "Probability that the process from a block of 2N+1 seeds never leaves the block.",
    (nonneg("lam", 0.25), nonneg("mu", 0.25), grid("N_grid", [1, 2, 4, 8], "block half-widths", kind=int),
     reps(100000, doc="replicas per N"), nonneg("S", 0.0, "finite horizon (0: twice the pilot maximum)"),
     positive("pilot_reps", 2000, "pilot runs from the largest block", kind=int),
     unit("level", 0.01, "trend test level")),
    (table("replicas", "N:int i:int contained:int died:int"),),
    lambda p: [(f"N{N}", p["reps"], 256) for N in p["N_grid"]],
    _cont_replica, _cont_reduce,
    derived=(table("levels", "N:int eps:float se:float ci_lo:float ci_hi:float alive_at_S:int"),),
    prepare=_cont_prepare,
))


# ---------------------------------------------------------------------------- speed comparison
def _speed_replica(p, kind, seeds, idx):
    out = []
    for s, i in zip(seeds, idx):
        tr = competition_trace(p["lam"], p["mu"], s, p["T"], cascade=p.get("cascade", False))
        out.append(("traces", (i, tr.N, tr.F, tr.xbar, tr.D, tr.rbar_T, tr.R_T, tr.report.total_checks,
                               len(tr.report.violations))))
    return out


def _speed_reduce(p, rows, s: Summary, full: bool = True):
    names = ("fracpunch", "gap", "speed", "pathwise") if full else ("fracpunch", "pathwise")
    with s.section(*names):
        tr = rows["traces"]
        need(len(tr) >= 2, "fewer than 2 traces")
        fp = fracpunch_report(p["lam"], p["mu"], [r[2] for r in tr], [r[3] for r in tr])
        s.put(frac_ratio=fp.ratio, frac_se=fp.se, frac_target=fp.target, mean_F=fp.mean_F, mean_xbar=fp.mean_xbar)
        s.flag("fracpunch", fp.passed)
        viol = sum(r[8] for r in tr)
        s.put(checks=sum(r[7] for r in tr), violations=viol)
        s.flag("pathwise", viol == 0)
        if full:
            g = gap_report([r[6] - r[5] for r in tr], [r[2] for r in tr])
            s.put(mean_gap=g.mean_gap, gap_diff=g.diff, gap_se=g.se)
            s.flag("gap", g.passed)
            sp = speed_report(p["lam"], p["mu"], [r[5] for r in tr], [r[6] for r in tr], p["T"])
            s.put(alpha_hat=sp.alpha_hat, alpha_se=sp.alpha_se, beta_hat=sp.beta_hat, beta_se=sp.beta_se,
                  bound=sp.bound, combined_se=sp.combined_se, paired_se=sp.paired_se)
            s.flag("speed", sp.passed)


TRACES = "i:int N:int F:int xbar:int D:int rbar_T:float R_T:float checks:int violations:int"
SPEED_PARAMS = (positive("lam", 1.0), positive("mu", 2.0), positive("T", 50.0), reps(500))

register(Experiment(
    "speedcomp", "Competitions at the running maximum and the comparison alpha <= (lam/mu) beta.",
    SPEED_PARAMS + (Param("cascade", _bool, True, "0 or 1", None, "track the contact cascade hand-offs"),),
    (table("traces", TRACES),),
    lambda p: [("trace", p["reps"], 1)],
    _speed_replica, _speed_reduce, validate=_mu_ge_lam,
))

register(Experiment(
    "fracpunch", "Mean punches against (mu - lam)/lam times the mean number of edge advances.",
    SPEED_PARAMS,
    (table("traces", TRACES),),
    lambda p: [("trace", p["reps"], 1)],
    _speed_replica, lambda p, rows, s: _speed_reduce(p, rows, s, full=False), validate=_mu_ge_lam,
))


def _subadd_validate(p):
    _mu_ge_lam(p)
    if p["s"] > p["u"]:
        raise UsageError("s", "need s <= u")


def _subadd_reduce(p, rows, s: Summary):
    with s.section("subadditive"):
        rr = rows["replicas"]
        need(len(rr) > 0, "no replicas")
        viol = sum(r[1] + r[2] < r[3] for r in rr)
        s.put(checks=len(rr), violations=viol)
        s.flag("subadditive", viol == 0)


register(Experiment(
    "subadd", "Pathwise subadditivity of the running maximum of the half-line edge.",
    (positive("lam", 1.0), positive("mu", 2.0), nonneg("s", 5.0), nonneg("u", 10.0), reps(1000)),
    (table("replicas", "i:int x_s:int x_su:int x_u:int"),),
    lambda p: [("subadd", p["reps"], 4)],
    lambda p, kind, seeds, idx: [("replicas", (i,) + subadditive_replica(p["lam"], p["mu"], s, p["s"], p["u"]))
                                 for s, i in zip(seeds, idx)],
    _subadd_reduce,
    validate=_subadd_validate,
))


# ---------------------------------------------------------------------------- c.s.e.
def _cse_replica(p, kind, seeds, idx):
    if kind == "plateau":
        return [("fails", (i, cse_replica(p["M"], p["mu"], s, max(p["S_grid"])))) for s, i in zip(seeds, idx)]
    out = []
    for s, i in zip(seeds, idx):
        out += [("records", r) for r in _records_rows(i, cse_regeneration(p["M"], p["mu"], s, p["T"], p["S"]))]
    return out


def _cse_reduce(p, rows, s: Summary):
    with s.section("plateau_positive"):
        f = rows["fails"]
        need(len(f) > 0, "no plateau replicas")
        curve = []
        for S, ph, se in cse_curve([r[1] for r in f], sorted(p["S_grid"])):
            lo, hi = proportion(round(ph * len(f)), len(f)).ci()
            curve.append((S, ph, se, lo, hi))
        s.tables["curve"] = curve
        s.put(p_plateau=curve[-1][1], p_plateau_se=curve[-1][2], plateau_ci_lo=curve[-1][3])
        s.flag("plateau_positive", curve[-1][3] > 0)
    with s.section("ks_X", "ks_Psi"):
        recs = _as_records(rows["records"])
        s.put(records=len(recs))
        need(len(recs) >= 10, "fewer than 10 records")
        _, pX = ks_halves([r.X for r in recs])
        _, pP = ks_halves([r.Psi for r in recs])
        a = estimate_alpha(recs, min_records=2)
        s.put(ks_X_p=pX, ks_Psi_p=pP, alpha_hat=a.alpha_hat, alpha_se=a.se)
        s.flag("ks_X", pX > p["level"])
        s.flag("ks_Psi", pP > p["level"])


register(Experiment(
    "cse", "Range-M contact process: probability that one seed controls the edge, and c.s.e. increments.",
    (positive("M", 1, "range", kind=int), positive("mu", 2.0), grid("S_grid", [5.0, 10.0, 20.0, 40.0], "horizons"),
     reps(1000, doc="plateau replicas"), reps(10, "regen_reps", "runs scanned for c.s.e. points"),
     positive("T", 100.0, "regeneration horizon"), nonneg("S", 40.0, "c.s.e. acceptance look-ahead"),
     unit("level", 0.01, "test level")),
    (table("fails", "i:int failure_time:float"), table("records", RECORDS)),
    lambda p: [("plateau", p["reps"], 8), ("regen", p["regen_reps"], 1)],
    _cse_replica, _cse_reduce,
    derived=(table("curve", "S:float p_hat:float se:float ci_lo:float ci_hi:float"),),
))


# ---------------------------------------------------------------------------- percolation
def _gen(p, key="p"):
    return Independent(p[key]) if p.get("gen", "independent") == "independent" else Overlap(p[key])


def _perc_density_replica(p, kind, seeds, idx):
    if kind.startswith("n"):
        n = int(kind[1:])
        Y = [y + n for y in window(n, p["beta"])]
        rows = final_rows(_gen(p), seeds, n)
        cnt = rows[:, Y].sum(axis=1) if Y else np.zeros(len(seeds), dtype=int)
        return [("density", (n, i, int(rows[j].any()), int(cnt[j]), len(Y))) for j, i in enumerate(idx)]
    out = []
    if kind == "restriction":
        n, gen = p["restriction_n"], Independent(p["restriction_p"])
        for s, i in zip(seeds, idx):
            row = (i, p["max_tries"], 0, 0, 0)
            for k in range(p["max_tries"]):
                f = generate_field(gen, derive_seed(s, k), n, 3 * n)
                if percolate(f, [0], n).survived:
                    rep = restriction_field_check(f, n)
                    row = (i, k + 1, rep.total_checks, len(rep.violations), 1)
                    break
            out.append(("restriction", row))
        return out
    side = int(math.ceil(math.sqrt(p["density_bits"])))
    for s, i in zip(seeds, idx):
        f = generate_field(Overlap(p["overlap_q"]), s, side - 1, side)
        bits = np.concatenate([f.bits[k, (k + f.lo) % 2::2] for k in range(side)])
        out.append(("generator", (i, int(bits.sum()), int(bits.size))))
    return out


def _perc_density_reduce(p, rows, s: Summary):
    with s.section("tail"):
        levels = []
        for n in sorted(p["n_grid"]):
            sub = [r for r in rows["density"] if r[0] == n]
            need(len(sub) > 0, f"no fields for n={n}")
            hits = sum(r[2] and r[3] < p["rho"] * r[4] for r in sub)
            pr = proportion(hits, len(sub))
            levels.append((n, pr.p, pr.se, float(np.mean([r[3] / r[4] if r[4] else math.nan for r in sub]))))
        s.tables["levels"] = levels
        s.put(tail=levels[-1][1], tail_se=levels[-1][2])
        s.flag("tail", levels[-1][1] < p["tail_max"])
    with s.section("restriction"):
        rr = rows["restriction"]
        need(len(rr) > 0, "no restriction fields")
        surv = sum(r[4] for r in rr)
        viol = sum(r[3] for r in rr)
        s.put(restriction_fields=surv, restriction_checks=sum(r[2] for r in rr), restriction_violations=viol,
              restriction_tries=sum(r[1] for r in rr))
        s.flag("restriction", viol == 0 and surv == len(rr))
    with s.section("generator"):
        g = rows["generator"]
        need(len(g) >= 2, "fewer than 2 generator fields")
        m, se = mean_se([r[1] / r[2] for r in g])
        target = Overlap(p["overlap_q"]).density
        s.put(overlap_density=m, overlap_se=se, overlap_target=target)
        s.flag("generator", abs(m - target) <= 3 * se if se > 0 else m == target)


register(Experiment(
    "percolation-density", "Oriented site percolation: density tail, restriction identity and generator density.",
    (Param("gen", _choice("independent", "overlap"), "independent", "independent or overlap", None,
           "field generator"),
     unit("p", 0.95, "generator parameter"), unit("rho", 0.8, "density threshold"),
     unit("beta", 0.5, "window fraction"), grid("n_grid", [20, 40, 60], "row counts", kind=int, lo=1),
     reps(2000, doc="fields per n"), unit("tail_max", 0.01, "bound on the tail at the largest n"),
     unit("restriction_p", 0.9), positive("restriction_n", 50, kind=int),
     reps(1000, "restriction_fields", "surviving fields for the restriction identity"),
     positive("max_tries", 100, "fields tried per surviving field", kind=int),
     unit("overlap_q", 0.9, "base density of the 1-dependent generator"),
     reps(20, "density_fields", "fields for the generator density"),
     positive("density_bits", 5000, "lattice sites per generator field", kind=int)),
    (table("density", "n:int i:int alive:int count:int size:int"),
     table("restriction", "i:int tries:int checks:int violations:int survived:int"),
     table("generator", "i:int open:int sites:int")),
    lambda p: [(f"n{n}", p["reps"], 256) for n in sorted(p["n_grid"])]
    + [("restriction", p["restriction_fields"], 10), ("generator", p["density_fields"], 1)],
    _perc_density_replica, _perc_density_reduce,
    derived=(table("levels", "n:int p_hat:float se:float mean_fraction:float"),),
))


def _perc_growth_replica(p, kind, seeds, idx):
    n = int(kind[1:])
    rows = final_rows(Independent(p["p"]), seeds, n)
    alive = rows.any(axis=1)
    R = n - np.argmax(rows[:, ::-1], axis=1)
    return [("replicas", (n, i, int(alive[j]), int(R[j]) if alive[j] else 0)) for j, i in enumerate(idx)]


def _perc_growth_reduce(p, rows, s: Summary):
    with s.section("decay"):
        pts = []
        for n in sorted(p["n_grid"]):
            sub = [r for r in rows["replicas"] if r[0] == n and r[2]]
            need(len(sub) > 0, f"no surviving fields for n={n}")
            pr = proportion(sum(r[3] < p["a"] * n for r in sub), len(sub))
            pts.append(GrowthPoint(n, pr.p, pr.se, len(sub)))
        s.tables["levels"] = [tuple(pt) for pt in pts]
        need(len(pts) >= 3, "fewer than 3 grid points")
        fit = growth_fit(pts)
        s.put(slope=fit.slope, slope_se=fit.slope_se, r2=fit.r2)
        s.flag("decay", fit.slope < 0)


register(Experiment(
    "percolation-growth", "P(R_n < a n | survival) across row counts.",
    (unit("p", 0.95), Param("a", _float, 0.3, "real", None, "speed threshold"),
     grid("n_grid", [20, 40, 60], "row counts", kind=int, lo=1), reps(100000, doc="fields per n")),
    (table("replicas", "n:int i:int alive:int R:int"),),
    lambda p: [(f"n{n}", p["reps"], 1024) for n in sorted(p["n_grid"])],
    _perc_growth_replica, _perc_growth_reduce,
    derived=(table("levels", "n:int p_hat:float se:float survived:int"),),
))


# ---------------------------------------------------------------------------- duality
def _dual_replica(p, kind, seeds, idx):
    A, B = (p["A"], p["B"]) if kind == "AB" else (p["B"], p["A"])
    return [("replicas", (kind, i, int(duality_hit(A, B, p["mu"], p["t"], s)))) for s, i in zip(seeds, idx)]


def _dual_reduce(p, rows, s: Summary):
    with s.section("duality"):
        ab = [r[2] for r in rows["replicas"] if r[0] == "AB"]
        ba = [r[2] for r in rows["replicas"] if r[0] == "BA"]
        need(len(ab) > 0 and len(ba) > 0, "no replicas")
        p1, p2 = proportion(sum(ab), len(ab)), proportion(sum(ba), len(ba))
        z = two_proportion_z(sum(ab), len(ab), sum(ba), len(ba))
        s.put(p_AB=p1.p, se_AB=p1.se, p_BA=p2.p, se_BA=p2.se, z=z)
        s.flag("duality", abs(z) < 3)


register(Experiment(
    "duality", "P(xi^A_t meets B) against P(xi^B_t meets A).",
    (ints("A", [0]), ints("B", [-2, -1, 0, 1, 2]), nonneg("mu", 1.0), nonneg("t", 3.0),
     reps(100000, doc="replicas per direction")),
    (table("replicas", "direction:str i:int hit:int"),),
    lambda p: [("AB", p["reps"], 256), ("BA", p["reps"], 256)],
    _dual_replica, _dual_reduce,
))


# ---------------------------------------------------------------------------- configuration
@dataclass
class ExperimentConfig:
    experiment: str
    params: Dict[str, Any]
    master_seed: int = 0
    workers: int = 1
    output: Path = Path("results")


def parse_kv(text: str, source: str = "config") -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{n}", f"expected key=value, got {line!r}")
        k, v = (x.strip() for x in line.split("=", 1))
        if not k:
            raise UsageError(f"{source}:{n}", "empty key")
        out[k] = v
    return out


def make_config(experiment: str, raw: Mapping[str, str] = (), **overrides: Any) -> ExperimentConfig:
    """Validate string settings (file keys) plus typed overrides into a config."""
    if experiment not in EXPERIMENTS:
        raise UsageError("experiment", f"unknown experiment {experiment!r}")
    exp = EXPERIMENTS[experiment]
    pm = exp.param_map
    raw = dict(raw)
    if "experiment" in raw:
        if raw.pop("experiment") != experiment:
            raise UsageError("experiment", "config file names a different experiment")
    params = {p.name: p.default for p in exp.params}
    seed, workers, out = 0, 1, Path("results") / experiment
    for k, v in raw.items():
        if k == "seed":
            seed = _parse_reserved(k, v)
        elif k == "workers":
            workers = _parse_reserved(k, v)
        elif k == "out":
            out = Path(v)
        elif k in pm:
            params[k] = _parse(pm[k], v)
        else:
            raise UsageError(k, f"unknown key for {experiment}")
    for k, v in overrides.items():
        if v is None:
            continue
        if k == "seed":
            seed = int(v)
        elif k == "workers":
            workers = int(v)
        elif k == "out":
            out = Path(v)
        elif k in pm:
            params[k] = _parse(pm[k], v) if isinstance(v, str) else v
            _check(pm[k], params[k])
        else:
            raise UsageError(k, f"unknown key for {experiment}")
    if seed < 0:
        raise UsageError("seed", "must be >= 0")
    if workers < 1:
        raise UsageError("workers", "must be >= 1")
    if exp.validate is not None:
        try:
            exp.validate(params)
        except UsageError:
            raise
        except (ValueError, KeyError) as e:
            raise UsageError("params", str(e))
    return ExperimentConfig(experiment, params, seed, workers, out)


def _parse_reserved(k: str, v: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise UsageError(k, f"expected an integer, got {v!r}") from None


def _parse(p: Param, v: str) -> Any:
    try:
        x = p.parse(v)
    except (ValueError, TypeError):
        raise UsageError(p.name, f"cannot parse {v!r}" + (f" (expected {p.rule})" if p.rule else "")) from None
    _check(p, x)
    return x


def _check(p: Param, x: Any):
    if p.check is not None and not p.check(x):
        raise UsageError(p.name, f"value {_fmt(x)} out of range (expected {p.rule})")


# ---------------------------------------------------------------------------- running
def stream_id(kind: str) -> int:
    return zlib.crc32(kind.encode("utf-8"))


@dataclass
class ExperimentResult:
    experiment: str
    estimates: Dict[str, Any]
    flags: Dict[str, Any]
    tables: Dict[str, List[tuple]]
    provenance: Dict[str, Any]
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.flags) and all(v is True for v in self.flags.values())

    def summary(self) -> Dict[str, Any]:
        return {"experiment": self.experiment, "estimates": self.estimates, "flags": self.flags,
                "passed": self.passed, "provenance": self.provenance}


Task = Tuple[str, Dict[str, Any], str, int, int, int]


def _work(task: Task) -> Tuple[str, int, List[Tuple[str, tuple]]]:
    name, params, kind, start, stop, master = task
    idx = list(range(start, stop))
    seeds = [derive_seed(master, stream_id(kind), i) for i in idx]
    return kind, start, EXPERIMENTS[name].replica(params, kind, seeds, idx)


def plan_tasks(cfg: ExperimentConfig, params: Mapping[str, Any]) -> List[Task]:
    exp = EXPERIMENTS[cfg.experiment]
    tasks: List[Task] = []
    if params.get("reps", 1) == 0:
        return tasks
    for kind, count, batch in exp.plan(params):
        for start in range(0, count, batch):
            tasks.append((exp.name, dict(params), kind, start, min(count, start + batch), cfg.master_seed))
    return tasks


def merge(exp: Experiment, params: Mapping[str, Any],
          batches: Sequence[Tuple[str, int, List[Tuple[str, tuple]]]]) -> Rows:
    """Order batches by (kind position in the plan, first index), whatever order they arrived in."""
    order = {k: n for n, (k, _, _) in enumerate(exp.plan(params))}
    rows: Rows = {t.name: [] for t in exp.tables}
    for _, _, out in sorted(batches, key=lambda b: (order[b[0]], b[1])):
        for name, row in out:
            rows[name].append(row)
    return rows


def reduce_tables(exp: Experiment, params: Mapping[str, Any], rows: Rows) -> Summary:
    s = Summary()
    exp.reduce(params, rows, s)
    for t in exp.derived:
        s.tables.setdefault(t.name, [])
    return s


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    exp = EXPERIMENTS[cfg.experiment]
    t0 = time.perf_counter()
    params = dict(cfg.params)
    if exp.prepare is not None and params.get("reps", 1) != 0:
        exp.prepare(params, cfg.master_seed)
    tasks = plan_tasks(cfg, params)
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(_work, tasks))
    else:
        batches = [_work(t) for t in tasks]
    rows = merge(exp, params, batches)
    s = reduce_tables(exp, params, rows)
    tables = dict(rows)
    tables.update(s.tables)
    prov = {"config": {k: params[k] for k in sorted(params)}, "seed": cfg.master_seed, "version": __version__}
    res = ExperimentResult(exp.name, s.estimates, s.flags, tables, prov, time.perf_counter() - t0)
    if write:
        write_outputs(res, cfg.output, cfg.workers)
    return res


# ---------------------------------------------------------------------------- files
def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, Path):
        return str(v)
    return v


def all_tables(exp: Experiment) -> Tuple[Table, ...]:
    return exp.tables + exp.derived


def write_outputs(res: ExperimentResult, out: Path, workers: int = 1) -> None:
    """``<table>.csv`` per table, ``summary.json`` and ``timing.json`` (the only run-dependent file)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    exp = EXPERIMENTS[res.experiment]
    for t in all_tables(exp):
        with open(out / f"{t.name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(t.header)
            for row in res.tables.get(t.name, []):
                w.writerow([_cell(v) for v in row])
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(res.summary()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w", encoding="utf-8") as fh:
        json.dump({"wall_time_s": res.wall_time, "workers": workers}, fh, indent=2, sort_keys=True)
        fh.write("\n")


_READERS = {"int": int, "float": float, "str": str}


def read_table(path: Path, t: Table) -> List[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != t.header:
            raise ValueError(f"{path}: header {header} does not match {t.header}")
        types = [_READERS[ty] for _, ty in t.columns]
        return [tuple(f(x) for f, x in zip(types, row)) for row in r]


def _unjson(v: Any) -> Any:
    if isinstance(v, str) and v in ("nan", "inf", "-inf"):
        return float(v)
    return v


def recompute(out: Path) -> Summary:
    """Recompute estimates and flags from the CSV tables and the config echo in ``summary.json``."""
    out = Path(out)
    with open(out / "summary.json", encoding="utf-8") as fh:
        summ = json.load(fh)
    exp = EXPERIMENTS[summ["experiment"]]
    params = {k: _unjson(v) for k, v in summ["provenance"]["config"].items()}
    rows = {t.name: read_table(out / f"{t.name}.csv", t) for t in exp.tables}
    return reduce_tables(exp, params, rows)


def schema() -> Dict[str, Any]:
    """Column schema and documented keys of every experiment."""
    out = {}
    for name in sorted(EXPERIMENTS):
        exp = EXPERIMENTS[name]
        out[name] = {
            "doc": exp.doc,
            "keys": {p.name: {"default": _fmt(p.default), "rule": p.rule, "doc": p.doc} for p in exp.params},
            "tables": {t.name: [{"name": c, "type": ty} for c, ty in t.columns] for t in all_tables(exp)},
        }
    return out
