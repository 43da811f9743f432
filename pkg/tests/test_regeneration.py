import math

import numpy as np
import pytest

from ipslab.graphical import Construction, LAMBDA, ParameterError, RECOVERY
from ipslab.processes import INF, Configuration, ProcessParams, Run
from ipslab.regeneration import (EdgePath, RegenRecord, clt_diagnostic, complete, convergence_report,
                                 cse_curve, cse_failure_time, cse_regeneration, estimate_alpha, estimate_beta,
                                 estimate_sigma2, estimate_theta, estimate_void, find_break_points,
                                 growth_report, half_line_edge, theta_replica, void_from_replicas,
                                 void_replica, VoidEstimate, zeta_void_replica)
from ipslab.stats import InsufficientDataError


def test_edge_path_queries():
    e = EdgePath([(0.0, 0), (1.0, 2), (2.0, 1), (3.0, 3), (4.0, -1)])
    assert e.value(1.5) == 2 and e.value(4.0) == -1
    assert e.hit(1) == 1.0 and e.hit(2) == 1.0 and e.hit(3) == 3.0 and e.hit(4) == INF
    assert e.next_at(1, 0.5) == 2.0 and e.next_at(2, 1.2) == 1.2 and e.next_at(7, 0) == INF
    assert e.max_on(0.0, 3.0) == 2 and e.min_on(1.0, 5.0) == -1


def test_break_points_on_a_scripted_trace():
    # the half-line edge steps 0 -> 1 -> 2; the restart from 1 dies, the one from 2 survives
    marks = [(1.0, LAMBDA, 0, 1), (1.5, RECOVERY, 1, 1), (2.0, LAMBDA, 0, 1), (3.0, LAMBDA, 1, 2)]
    c = Construction.scripted(marks, 20.0)
    p = ProcessParams(1.0, 1.0)
    recs = find_break_points(p, 0, 10.0, 5.0, c=c)
    assert recs[0] == RegenRecord(2, 3.0, 0, False)
    assert recs[-1].censored and recs[-1].Psi == 7.0


@pytest.mark.parametrize("seed", range(4))
def test_break_points_sit_at_running_maxima(seed):
    p = ProcessParams(1.0, 2.0)
    T, S = 60.0, 10.0
    c = p.construction(seed, T + S)
    edge = half_line_edge(p, c, T + S)
    recs = find_break_points(p, seed, T, S, c=c, edge=edge)
    tau, level = 0.0, 0
    for r in complete(recs):
        tau += r.Psi
        level += r.X
        assert r.X >= 1 and r.Psi > 0 and r.Mback >= 0
        t = edge.hit(level)
        assert t == pytest.approx(tau, abs=1e-9)
        assert edge.value(t) == level == edge.max_on(0.0, t + 1e-12)
        restart = Run(c, Configuration.standard(level), t, t + S).run()
        assert restart.died_at is None


def test_break_points_validate():
    with pytest.raises(ParameterError):
        find_break_points(ProcessParams(2.0, 1.0), 0, 5.0, 1.0)


def _synthetic(n, seed=0):
    rng = np.random.default_rng(seed)
    psi = rng.exponential(1.0, n) + 0.1
    X = 1 + rng.poisson(0.5 * psi)
    return [RegenRecord(int(x), float(s), 0) for x, s in zip(X, psi)] + [RegenRecord(3, 0.5, 0, True)]


def test_alpha_sigma_and_clt_on_synthetic_records():
    recs = _synthetic(2000)
    est = estimate_alpha(recs)
    X = np.array([r.X for r in complete(recs)])
    P = np.array([r.Psi for r in complete(recs)])
    assert est.alpha_hat == pytest.approx(X.sum() / P.sum())
    assert est.n_records == 2000
    s2 = estimate_sigma2(recs, est.alpha_hat)
    assert s2 == pytest.approx(((X - est.alpha_hat * P) ** 2).mean() / P.mean())
    clt = clt_diagnostic(recs, est.alpha_hat, s2)
    assert clt.block_size == math.ceil(math.sqrt(2000)) and clt.p_value > 1e-3


def test_degenerate_records():
    recs = [RegenRecord(1, 1.0, 0)] * 300
    est = estimate_alpha(recs)
    assert est.alpha_hat == 1.0 and est.se == 0.0
    assert estimate_sigma2(recs, 1.0) == 0.0
    with pytest.raises(InsufficientDataError):
        clt_diagnostic(recs, 1.0, 0.0)
    with pytest.raises(InsufficientDataError):
        estimate_alpha(recs[:5])


def test_theta_replica_halves_agree_in_distribution():
    rows = [theta_replica(2.0, s, 40, 15.0) for s in range(6)]
    for tot, lf, rf, mid, W in rows:
        assert 0 <= tot <= 1 and 0 <= lf <= 1 and 0 <= rf <= 1 and W >= 40
    th = estimate_theta(2.0, 40, 15.0, 6)
    assert 0.2 < th.theta < 0.8


def test_void_estimates():
    frac, npos = void_replica(2.0, [-1, 0, 1], 5.0, 3)
    assert 0 <= frac <= 1 and npos > 0
    assert estimate_void(2.0, [], 5.0, 3) == VoidEstimate(1.0, 0.0, 0)
    v = void_from_replicas([(0.2, 10)])
    assert v.se == 0.0 and v.positions == 10
    with pytest.raises(InsufficientDataError):
        void_from_replicas([])


def test_convergence_report_arithmetic():
    rep = convergence_report(alive=600, void_alive=60, reps=1000, void=VoidEstimate(0.1, 0.01, 50))
    assert rep.lhs == pytest.approx(0.46)
    assert rep.rhs == pytest.approx(0.4 + 0.6 * 0.1)
    assert rep.diff == pytest.approx(0.0)


def test_zeta_void_replica_matches_run():
    p = ProcessParams(1.0, 2.0)
    for seed in range(20):
        alive, missed, inside = zeta_void_replica(p, [-1, 0, 1], 8.0, seed)
        inf = Run(p.construction(seed, 8.0), Configuration.standard(0), 0.0, 8.0, record=False).run().inf
        assert alive == bool(inf) and missed == (not inf & {-1, 0, 1})
        assert inside == (alive and min(inf) <= -1 and max(inf) >= 1)
        assert not (inside and not alive)


def test_growth_report_needs_survivors():
    with pytest.raises(InsufficientDataError):
        growth_report([0.5], (0.3, 0.01), (0.6, 0.01))
    g = growth_report([0.4, 0.44], (0.35, 0.0), (0.6, 0.0))
    assert g.predicted == pytest.approx(0.42) and g.rel_diff == pytest.approx(0.0, abs=1e-12)


def test_beta_is_monotone_in_time():
    b = estimate_beta(ProcessParams(1.0, 2.0), 5.0, 300, seed=1)
    assert b.beta_2S <= b.beta_S and 0 < b.beta_2S


@pytest.mark.parametrize("seed", range(6))
def test_cse_failure_time_against_direct_edges(seed):
    mu, S = 2.0, 8.0
    c = Construction.for_params(seed, mu, mu, S)
    fail = cse_failure_time(c, 0, 0.0, S)
    single = Run(c, Configuration({0: 1}, 0, 0), 0.0, S, contact=True).run()
    half = half_line_edge(ProcessParams(mu, mu), c, S, contact=True)
    one = EdgePath([(t, r) for t, r, _, _ in single.samples])
    times = sorted(set(half.times) | set(one.times))
    first_bad = next((t for t in times if one.value(t) != half.value(t)), INF)
    assert fail == first_bad


def test_cse_curve_and_regeneration():
    assert cse_curve([1.0, INF, 5.0, INF], [0.5, 2.0, 10.0]) == [
        (0.5, 1.0, 0.0), (2.0, 0.75, pytest.approx(math.sqrt(0.75 * 0.25 / 4))), (10.0, 0.5, 0.25)]
    recs = cse_regeneration(1, 2.0, 7, 20.0, 10.0)
    assert recs[-1].censored
    assert all(r.Psi >= 1.0 for r in complete(recs))
