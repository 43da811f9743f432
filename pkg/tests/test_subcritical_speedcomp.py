import math

import numpy as np
import pytest

from ipslab.graphical import ParameterError
from ipslab.processes import ProcessParams, UnsupportedError
from ipslab.speedcomp import (competition_trace, fracpunch_report, gap_report, speed_report,
                              subadditive_replica, subadditivity_check, verify_fracpunch)
from ipslab.subcritical import (block_start, containment_probability, containment_report, lifetime_decay,
                                lifetime_fit, pilot_horizon, range_decay, range_fit, range_levels,
                                range_replica)


# ---------------------------------------------------------------------------- subcritical
def test_pure_death_lifetime_is_exponential():
    # with no arrows the origin dies at rate 1, so log P(T > t) has slope -1
    fit = lifetime_decay(ProcessParams(0.0, 0.0), [0.5, 1, 1.5, 2, 2.5, 3], 20000, seed=2)
    assert fit.slope == pytest.approx(-1.0, abs=0.08)
    assert fit.levels[0][1] == pytest.approx(math.exp(-0.5), abs=0.015)


def test_lifetime_fit_on_exact_survival():
    deaths = np.random.default_rng(0).exponential(1 / 0.7, 50000)
    fit = lifetime_fit(list(deaths), [1, 2, 3, 4, 5, 6])
    assert fit.slope == pytest.approx(-0.7, abs=0.05) and fit.r2 > 0.99
    with pytest.raises(ParameterError):
        lifetime_fit(list(deaths), [1, 2, 3])


def test_range_without_arrows_is_zero():
    assert range_replica(ProcessParams(0.0, 0.0), 5) == (0, True)


def test_range_levels_and_fit():
    maxima = [0] * 50 + [1] * 25 + [2] * 13 + [3] * 6 + [4] * 6
    lv = range_levels(maxima, 4)
    assert [round(pr.p, 2) for _, pr in lv] == [0.5, 0.25, 0.12, 0.06]
    fit = range_fit(maxima, 4)
    assert fit.slope < 0 and fit.nonincreasing()


def test_range_decay_small_run():
    fit = range_decay(ProcessParams(0.25, 0.25), 5, 3000, seed=1)
    assert fit.slope < 0 and fit.unfinished == 0
    with pytest.raises(ParameterError):
        range_decay(ProcessParams(0.25, 0.25), 2, 10)


def test_containment():
    assert block_start(2).infected() == {-2, -1, 0, 1, 2}
    rep = containment_report([(1, 80, 0, 100), (2, 90, 0, 100), (4, 95, 1, 100)], 10.0)
    assert rep.all_positive and rep.min_eps == 0.8 and rep.alive_at_S == [0, 0, 1]
    p = ProcessParams(0.25, 0.25)
    small = containment_probability([1, 2], p, 300, seed=3, S=30.0)
    assert small.all_positive
    with pytest.raises(ParameterError):
        pilot_horizon(ProcessParams(3.0, 3.0), 1, reps=5, t_cap=20.0)


# ---------------------------------------------------------------------------- speed comparison
@pytest.mark.parametrize("seed", range(3))
def test_competition_trace_is_pathwise_consistent(seed):
    tr = competition_trace(1.0, 2.0, seed, 15.0)
    assert tr.report.ok, tr.report.violations[:3]
    assert tr.N == tr.F + tr.xbar + tr.D
    assert tr.cascade_upsilons == tr.upsilon_times
    assert tr.R_T >= tr.rbar_T


def test_competition_without_punches_at_lambda_equal_mu():
    tr = competition_trace(1.0, 1.0, 4, 15.0)
    assert tr.F == 0 and tr.report.ok


def test_competition_validates():
    with pytest.raises(UnsupportedError):
        competition_trace(2.0, 1.0, 0, 1.0)
    with pytest.raises(ParameterError):
        competition_trace(0.0, 1.0, 0, 1.0)


def test_fracpunch_small_sample():
    rep = verify_fracpunch(1.0, 2.0, 20.0, 60, seed=1)
    assert abs(rep.ratio - rep.target) < 4 * rep.se + 0.05
    assert fracpunch_report(1.0, 1.0, [0, 0], [0, 0]).passed


def test_report_arithmetic():
    g = gap_report([3, 5, 4], [2, 4, 4])
    assert g.diff == pytest.approx(2 / 3) and g.passed
    s = speed_report(1.0, 2.0, [10, 12], [40, 44], 10.0)
    assert s.alpha_hat == pytest.approx(1.1) and s.bound == pytest.approx(2.1) and s.passed


def test_subadditivity():
    for seed in range(10):
        a, b, whole = subadditive_replica(1.0, 2.0, seed, 3.0, 8.0)
        assert a + b >= whole >= a
    assert subadditivity_check(1.0, 2.0, 2.0, 5.0, 20).ok
    with pytest.raises(ParameterError):
        subadditive_replica(1.0, 2.0, 0, 5.0, 3.0)


def test_punch_share_of_competitions():
    # each competition is a race of rates lambda, mu - lambda and 1
    tr = [competition_trace(1.0, 2.0, s, 20.0, cascade=False) for s in range(60)]
    F = sum(t.F for t in tr)
    N = sum(t.N for t in tr)
    share = F / N
    assert abs(share - 1 / 3) < 4 * math.sqrt(share * (1 - share) / N)
