import math

import pytest
from hypothesis import given, settings, strategies as st

from ipslab.graphical import DELTA, LAMBDA, RECOVERY, Construction, HorizonExceeded, reachable
from ipslab.processes import (ConfigurationError, Configuration, ProcessParams, Run, UnsupportedError,
                              certified_pair, co_step, envelope_pair, evolve_contact, evolve_range_M,
                              evolve_three_state, forest_fire_cluster)
from ipslab.regeneration import half_line_edge

from oracles import replay_contact, replay_three_state


def dedupe(values):
    out = []
    for v in values:
        if not out or out[-1] != v:
            out.append(v)
    return out


params = st.tuples(st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.0, 0.5, 1.0, 2.0]))


def test_configuration_basics():
    eta = Configuration.standard(3)
    assert eta.value(3) == 1 and eta.value(0) == -1 and eta.infected() == {3}
    bar = Configuration.eta_bar(2)
    assert bar.value(-100) == 1 and bar.value(5) == -1 and not bar.finite_support()
    assert bar.translate(3).value(5) == 1
    assert Configuration.standard(0) <= Configuration.from_sets([0, 1])
    assert not Configuration.from_sets([0, 1]) <= Configuration.standard(0)
    assert Configuration.standard(0) <= Configuration.eta_bar(0)
    with pytest.raises(ConfigurationError):
        Configuration({0: 2})
    with pytest.raises(ConfigurationError):
        Configuration({}, 1, -1)
    with pytest.raises(ConfigurationError):
        bar.infected()


def test_scripted_three_state_rules():
    # lambda arrow infects a never-infected site, delta arrow only reinfects a 0
    marks = [(1.0, DELTA, 0, 1), (2.0, LAMBDA, 0, 1), (3.0, RECOVERY, 1, 1),
             (4.0, DELTA, 0, 1), (5.0, RECOVERY, 0, 0), (6.0, LAMBDA, 1, 2)]
    c = Construction.scripted(marks, 7.0)
    r = Run(c, Configuration.standard(0), 0.0, 7.0, snap_times=[1.5, 2.5, 3.5, 4.5, 5.5]).run()
    snaps = {t: (s.value(0), s.value(1)) for t, s in r.snapshots.items()}
    assert snaps == {1.5: (1, -1), 2.5: (1, 1), 3.5: (1, 0), 4.5: (1, 1), 5.5: (0, 1)}
    assert r.state(2) == 1 and r.died_at is None
    assert dedupe([s[1] for s in r.samples]) == [0, 1, 0, 1, 2]


def test_scripted_delta_targets_never_infected_when_lambda_exceeds_mu():
    marks = [(1.0, DELTA, 0, 1), (2.0, RECOVERY, 1, 1), (3.0, DELTA, 0, 1)]
    c = Construction.scripted(marks, 4.0, delta_target=-1)
    r = Run(c, Configuration.standard(0), 0.0, 4.0).run()
    assert r.state(1) == 0


def test_death_is_recorded():
    c = Construction.scripted([(0.5, RECOVERY, 0, 0)], 1.0)
    tr = evolve_three_state(Configuration.standard(0), ProcessParams(1, 1), c, 1.0)
    assert tr.died_at == 0.5 and not tr.alive_at(0.6)
    assert tr.samples[-1][1] == -math.inf and tr.samples[-1][3] == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 9), lm=params, start=st.sets(st.integers(-2, 2), min_size=1, max_size=4))
def test_run_matches_event_replay(seed, lm, start):
    lam, mu = lm
    p = ProcessParams(lam, mu)
    T = 3.0
    c = p.construction(seed, T)
    r = Run(c, Configuration.from_sets(start), 0.0, T).run()
    ref, path = replay_three_state(c, {x: 1 for x in start}, T, -80, 80)
    assert {x: r.state(x) for x in range(-30, 31)} == {x: ref[x] for x in range(-30, 31)}
    got = [None if math.isinf(v) else int(v) for _, v, _, _ in r.samples]
    assert dedupe(got) == [v for _, v in path]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 9), mu=st.sampled_from([0.5, 1.0, 2.0]),
       start=st.sets(st.integers(-3, 3), min_size=1, max_size=4))
def test_contact_run_matches_reachable(seed, mu, start):
    c = Construction.for_params(seed, mu, mu, 2.5)
    r = Run(c, Configuration.from_sets(start, default=0), 0.0, 2.5, contact=True).run()
    assert frozenset(r.inf) == reachable(c, start, 0.0, 2.5)
    assert frozenset(r.inf) == replay_contact(c, start, 2.5, -80, 80)


def test_contact_uses_delta_arrows_only_when_they_reinfect():
    c = Construction.for_params(3, 1.0, 2.0, 4.0)
    tr = evolve_contact({0}, 2.0, c, 4.0)
    r = Run(c, Configuration.from_sets({0}, default=0), 0.0, 4.0, contact=True).run()
    assert tr.samples[-1][3] == len(r.inf)
    with pytest.raises(ConfigurationError):
        evolve_contact({0}, 1.0, c, 4.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 9), lam=st.sampled_from([0.5, 1.5, 3.0]))
def test_forest_fire_cluster_is_the_ever_infected_set(seed, lam):
    c = Construction.for_params(seed, lam, 0.0, 60.0)
    cluster = forest_fire_cluster(0, lam, c)
    r = Run(c, Configuration.standard(0), 0.0, 60.0).run()
    if r.died_at is not None:
        assert cluster == frozenset(r.ever)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 9), lm=st.sampled_from([(0.5, 1.0), (1.0, 1.0), (1.0, 2.0)]))
def test_certified_edge_matches_long_finite_cut(seed, lm):
    p = ProcessParams(*lm)
    T = 3.0
    c = p.construction(seed, T)
    edge = half_line_edge(p, c, T)
    _, path = replay_three_state(c, {x: 1 for x in range(-80, 1)}, T, -80, 80)
    assert dedupe(edge.values) == [v for _, v in path]


def test_envelopes_sandwich_truth():
    p = ProcessParams(1.0, 2.0)
    c = p.construction(9, 5.0)
    lower, upper = envelope_pair(c, Configuration.eta_bar(0), 5, 0.0, 5.0, False)
    co_step([lower, upper])
    _, path = replay_three_state(c, {x: 1 for x in range(-100, 1)}, 5.0, -100, 100)
    assert lower.r <= path[-1][1] <= upper.r
    lo, up, W = certified_pair(c, Configuration.eta_bar(0), 0.0, 5.0, False, lambda a, b: a.r == b.r)
    assert lo.r == up.r == path[-1][1]


def test_half_line_contact_edge_dominates_three_state_edge():
    p = ProcessParams(1.0, 2.0)
    for seed in range(10):
        c = p.construction(seed, 10.0)
        a = half_line_edge(p, c, 10.0)
        b = half_line_edge(p, c, 10.0, contact=True)
        for t in a.times + b.times:
            assert b.value(t) >= a.value(t)


def test_half_line_needs_monotone_parameters():
    p = ProcessParams(2.0, 1.0)
    c = p.construction(1, 2.0)
    with pytest.raises(UnsupportedError):
        evolve_three_state(Configuration.eta_bar(0), p, c, 2.0)


def test_range_m_requires_equal_rates():
    p = ProcessParams(1.0, 1.0, M=2)
    c = p.construction(4, 3.0)
    tr = evolve_range_M({0}, p, c, 3.0)
    r = reachable(c, {0}, 0.0, 3.0)
    assert tr.samples[-1][3] == len(r)
    with pytest.raises(UnsupportedError):
        evolve_range_M({0}, ProcessParams(1.0, 2.0, M=2), ProcessParams(1.0, 2.0, M=2).construction(0, 1.0), 1.0)


def test_horizon_is_enforced():
    p = ProcessParams(1.0, 1.0)
    c = p.construction(0, 1.0)
    with pytest.raises(HorizonExceeded):
        evolve_three_state(Configuration.standard(0), p, c, 2.0)
