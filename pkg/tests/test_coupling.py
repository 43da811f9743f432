import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from ipslab.coupling import (ViolationReport, _pair_rates, check_duality, co_evolve_ordered, co_evolve_shared,
                             domination_check, marginal_replica, random_ordered_pair, rightmost_identity_check,
                             sandwich_check, shared_checks, two_proportion_z, two_site_exact, two_site_mc,
                             two_site_replica, two_site_run)
from ipslab.graphical import ParameterError
from ipslab.processes import Configuration, ProcessParams


def two_site_generator(lam: float, mu: float) -> tuple:
    """Generator of the three-state process on two sites, states ordered as in ``itertools.product``."""
    states = list(itertools.product((-1, 0, 1), repeat=2))
    Q = np.zeros((9, 9))
    for i, s in enumerate(states):
        for x in (0, 1):
            other = s[1 - x]
            new = list(s)
            if s[x] == 1:
                new[x] = 0
                rate = 1.0
            elif other == 1:
                new[x] = 1
                rate = lam if s[x] == -1 else mu
            else:
                continue
            j = states.index(tuple(new))
            Q[i, j] += rate
            Q[i, i] -= rate
    return states, Q


@pytest.mark.parametrize("lam,t", [(2.0, 1.0), (0.5, 2.0), (1.0, 1.0), (3.0, 0.3), (1.0 + 1e-11, 0.7)])
def test_two_site_closed_form_matches_matrix_exponential(lam, t):
    states, Q = two_site_generator(lam, 0.0)
    P = expm(Q * t)
    want = P[states.index((1, -1)), states.index((1, 1))]
    assert two_site_exact(lam, t) == pytest.approx(want, rel=1e-9)


def test_two_site_value_at_the_witness_point():
    v = two_site_exact(2.0, 1.0)
    assert v == pytest.approx(math.exp(-2) * 2 * (1 - math.exp(-1)), rel=1e-14)
    assert abs(v - 0.1710964) < 1e-7
    assert v > math.exp(-2)


def test_two_site_mc_small():
    p, se = two_site_mc(2.0, 1.0, 4000, 1)
    assert abs(p - two_site_exact(2.0, 1.0)) < 4 * se
    q, se = two_site_mc(2.0, 1.0, 4000, 2, start="V")
    assert abs(q - math.exp(-2)) < 4 * se
    with pytest.raises(ParameterError):
        two_site_mc(2.0, 1.0, 1, 1, start="x")


@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
@pytest.mark.parametrize("start", ["u", "V"])
def test_two_site_read_off_equals_event_simulation(lam, start):
    for s in range(500):
        assert two_site_replica(lam, 1.0, s, start) == two_site_run(lam, 1.0, s, start)


def test_shared_construction_checks_have_no_violations():
    p = ProcessParams(1.0, 2.0)
    for seed in range(8):
        reps = shared_checks(p, seed, 8.0)
        for name, rep in reps.items():
            assert rep.ok, (name, rep.violations[:3])
        assert reps["rightmost"].total_checks > 0
        assert reps["sandwich"].total_checks > 0


def test_individual_checks_run_at_lambda_equal_mu():
    p = ProcessParams(1.0, 1.0)
    c = p.construction(3, 6.0)
    assert rightmost_identity_check(p, c, 6.0).ok
    assert sandwich_check(p, c, 6.0).ok
    assert domination_check(p, c, 6.0).ok


def test_order_check_skips_non_monotone_parameters():
    p = ProcessParams(2.0, 0.5)
    eta, eta2 = random_ordered_pair(5)
    res = co_evolve_shared([eta, eta2], p, p.construction(5, 5.0), 5.0)
    assert res.report.total_checks == 0  # pairs are only compared when mu >= lambda


def test_random_ordered_pair_is_ordered():
    for s in range(50):
        a, b = random_ordered_pair(s)
        assert a <= b and a.value(0) == b.value(0) == 1


def test_pair_rate_table():
    p, p2 = ProcessParams(0.5, 1.0), ProcessParams(1.0, 2.0)
    # every rate is nonnegative whenever the pair is ordered and n <= n2
    for up, lo in [(0, -1), (-1, -1), (0, 0), (1, -1), (1, 0), (1, 1)]:
        for n in range(3):
            for n2 in range(n, 3):
                for rate, new in _pair_rates(up, lo, n, n2, p, p2):
                    assert rate >= 0
                    assert new[1] <= new[0]
    with pytest.raises(ValueError):
        _pair_rates(-1, 0, 1, 1, p, p2)


def test_ordered_coupling_marginals_match_the_rate_table():
    # marginal transition rates of each coordinate must equal its own process
    p, p2 = ProcessParams(0.5, 1.0), ProcessParams(1.0, 2.0)
    for up, lo in [(0, -1), (-1, -1), (0, 0), (1, -1), (1, 0), (1, 1)]:
        for n in range(3):
            for n2 in range(n, 3):
                rates = _pair_rates(up, lo, n, n2, p, p2)
                to_up1 = sum(r for r, new in rates if new[0] == 1 and up != 1)
                to_lo1 = sum(r for r, new in rates if new[1] == 1 and lo != 1)
                if up == -1:
                    assert to_up1 == pytest.approx(p2.lam * n2)
                elif up == 0:
                    assert to_up1 == pytest.approx(p2.mu * n2)
                if lo == -1:
                    assert to_lo1 == pytest.approx(p.lam * n)
                elif lo == 0:
                    assert to_lo1 == pytest.approx(p.mu * n)


def test_ordered_coupling_keeps_order():
    p, p2 = ProcessParams(0.5, 1.0), ProcessParams(1.0, 2.0)
    for s in range(20):
        a, b = random_ordered_pair(s)
        res = co_evolve_ordered(a, b, p, p2, s, 5.0)
        assert res.report.ok and res.report.total_checks > 0


def test_ordered_coupling_validates_input():
    p, p2 = ProcessParams(0.5, 1.0), ProcessParams(1.0, 2.0)
    a, b = Configuration.standard(0), Configuration.from_sets([0, 1])
    with pytest.raises(ParameterError):
        co_evolve_ordered(b, a, p, p2, 0, 1.0)
    with pytest.raises(ParameterError):
        co_evolve_ordered(a, b, p2, p, 0, 1.0)


def test_marginal_occupancy_small_sample():
    p, p2 = ProcessParams(0.5, 1.0), ProcessParams(1.0, 2.0)
    rows = [marginal_replica(p, p2, s, 1.0) for s in range(3000)]
    k1 = sum(a == 1 for a, _ in rows)
    k2 = sum(b == 1 for _, b in rows)
    assert abs(two_proportion_z(k1, 3000, k2, 3000)) < 4


def test_duality_small_sample():
    p1, p2, z = check_duality([0], range(-2, 3), 1.0, 1.5, 3000, seed=3)
    assert abs(z) < 4
    assert 0 < p1 < 1


def test_two_proportion_z_degenerate():
    assert two_proportion_z(0, 10, 0, 10) == 0.0
    assert two_proportion_z(10, 10, 0, 10) > 3


def test_violation_report_merge():
    a = ViolationReport(2, [(0.0, 1, "x")])
    b = ViolationReport(3)
    m = a.merge(b)
    assert m.total_checks == 5 and not m.ok


@pytest.mark.parametrize("lam", [1.5, 2.0, 4.0])
def test_witness_threshold_is_log_lambda_over_lambda_minus_one(lam):
    t_star = math.log(lam) / (lam - 1)
    assert two_site_exact(lam, t_star) == pytest.approx(math.exp(-2 * t_star), rel=1e-12)
    assert two_site_exact(lam, 0.9 * t_star) < math.exp(-1.8 * t_star)
    assert two_site_exact(lam, 1.1 * t_star) > math.exp(-2.2 * t_star)


def test_two_site_probability_not_increasing_in_lambda_below_one():
    t = 10.0
    vals = [two_site_exact(lam, t) for lam in (0.2, 0.5, 0.9)]
    assert vals[0] > vals[1] > vals[2]
