import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from acidp.audit import (AuditState, auditor_schedule, binomial_pvalue, confidence_bounds,
                         confidence_radius, monotone_repair, red_card_check,
                         sequence_statistic, window_variant_update, yellow_card_check)
from acidp.core import Observation, make_price_grid
from acidp.universes import MultiUniverse, binomial_universe, posterior_predictive_demand

from oracles import binomial_pmf, two_sided_pvalue


# -- sequence statistic and bounds ---------------------------------------------

def test_constant_demands_have_zero_statistic():
    assert sequence_statistic([4] * 12, 5, 10) == (0.0, 12)


def test_statistic_arithmetic():
    X, m = sequence_statistic([8, 8, 2, 2, 2, 2, 2], 5, 10)
    assert m == 7 and X == pytest.approx(2.4)


def test_too_short_window_has_no_test():
    assert sequence_statistic([1, 2, 3, 4, 5], 5, 10) is None


def test_zero_statistic_is_inside_bounds():
    lb, ub = confidence_bounds(0.0, 20, 5, 100, 0.05)
    assert lb < 0 < ub and lb == pytest.approx(-ub)


def test_radius_value():
    r = confidence_radius(1000, 0.05)
    inner = math.log(math.log(2000)) + 0.72 * math.log(208)
    assert inner == pytest.approx(5.871, abs=1e-3)
    assert r == pytest.approx(1.7 * math.sqrt(inner / 1000), abs=1e-15)
    assert r == pytest.approx(0.1303, abs=1e-4)


@given(st.floats(2, 1e6), st.floats(1e-4, 0.5), st.floats(0.01, 0.99))
def test_radius_grows_as_alpha_shrinks(tau, alpha, shrink):
    assert confidence_radius(tau, alpha * shrink) > confidence_radius(tau, alpha)


def test_time_variable_choice():
    default = confidence_bounds(1.0, 20, 5, 900, 0.05)
    literal = confidence_bounds(1.0, 20, 5, 900, 0.05, paper_literal_time=True)
    assert default[1] - default[0] == pytest.approx(2 * confidence_radius(15, 0.05))
    assert literal[1] - literal[0] == pytest.approx(2 * confidence_radius(900, 0.05))


def test_first_round_never_alarms():
    a = AuditState()
    assert yellow_card_check(a, Observation(1, 3, 10), 10) == "none"


def test_yellow_on_obvious_shift():
    a = AuditState()
    alerts = [yellow_card_check(a, Observation(t, 0, 1), 10) for t in range(1, 60)]
    assert "yellow" not in alerts
    alerts = [yellow_card_check(a, Observation(t, 0, 9), 10) for t in range(60, 70)]
    assert "yellow" in alerts
    assert a.last_test["arm"] == 1


def test_window_only_tests_the_played_arm():
    a = AuditState(w=20)
    for t in range(1, 40):
        yellow_card_check(a, Observation(t, t % 2, 2 if t % 2 else 8), 10)
    assert len(a.window) == 20
    assert a.last_test is not None and a.last_test["m"] == 10


def test_yellow_false_alarm_rate_small_sample():
    N, runs = 10, 20
    freq = []
    for seed in range(runs):
        rng, a = np.random.default_rng(seed), AuditState()
        hits = sum(yellow_card_check(a, Observation(t, 0, int(rng.binomial(N, 0.3))), N) == "yellow"
                   for t in range(1, 1001))
        freq.append(hits / 1000)
    assert max(freq) <= 0.10


def test_epsilon_decay_and_reset():
    a = AuditState(epsilon_init=0.1, r_decay=0.1)
    for k in range(1, 6):
        a.decay()
        assert a.epsilon == pytest.approx(0.1 * 0.1 ** k, rel=1e-12)
    a.reset_epsilon()
    assert a.epsilon == 0.1


# -- auditor schedule ----------------------------------------------------------

@pytest.mark.parametrize("K, count, arms", [(20, 5, [1, 5, 10, 15, 20]), (2, 5, [1, 2]),
                                            (50, 5, [1, 13, 25, 37, 50]), (7, 1, [1])])
def test_auditor_schedule(K, count, arms):
    assert [a + 1 for a in auditor_schedule(K, count)] == arms


@given(st.integers(2, 200), st.integers(2, 12))
def test_schedule_spans_grid(K, count):
    arms = auditor_schedule(K, count)
    assert arms[0] == 0 and arms[-1] == K - 1
    assert arms == sorted(set(arms)) and len(arms) <= count


# -- exact binomial test -------------------------------------------------------

@pytest.mark.parametrize("d, N, p0, expected", [(5, 10, 0.5, 1.0), (10, 10, 0.5, 2 / 1024),
                                                 (0, 10, 0.0, 1.0)])
def test_pvalue_examples(d, N, p0, expected):
    assert binomial_pvalue(d, N, p0) == pytest.approx(expected, abs=1e-15)


def test_pvalue_matches_enumeration_grid():
    worst = 0.0
    for N in range(1, 31):
        for p0 in np.round(np.arange(0.1, 1.0, 0.1), 10):
            for d in range(N + 1):
                worst = max(worst, abs(binomial_pvalue(d, N, p0) - two_sided_pvalue(d, N, p0)))
    assert worst <= 1e-12


@settings(max_examples=200)
@given(st.integers(1, 60), st.floats(0, 1), st.data())
def test_pvalue_is_a_probability(N, p0, data):
    d = data.draw(st.integers(0, N))
    pv = binomial_pvalue(d, N, p0)
    assert 0.0 <= pv <= 1.0
    assert pv >= binomial_pmf(N, p0)[d] * (1 - 1e-9) - 1e-15


# -- red card ------------------------------------------------------------------

def fixed_multiverse(K=20, N=10):
    return MultiUniverse([binomial_universe(np.linspace(0.9, 0.05, K), N),
                          binomial_universe(np.linspace(0.8, 0.1, K), N)], [0.5, 0.5])


def test_red_card_empty_and_extreme():
    assert red_card_check([], fixed_multiverse(), 0.01) == "none"
    mu = MultiUniverse([binomial_universe(np.full(3, 0.1), 500)])
    assert red_card_check([(1, 500)], mu, 0.01) == "red"


def test_red_card_size_under_null():
    mu = fixed_multiverse()
    D = posterior_predictive_demand(mu)
    arms = auditor_schedule(20, 5)
    rng = np.random.default_rng(0)
    reds = 0
    for _ in range(1000):
        samples = [(a, int(rng.binomial(10, D[a]))) for a in arms]
        reds += red_card_check(samples, mu, 0.01) == "red"
    assert reds / 1000 <= 0.01 + 0.01


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 19), st.integers(0, 10)), min_size=1, max_size=8),
       st.floats(0.001, 0.2))
def test_red_implies_some_individual_rejection(samples, alpha):
    alert, pvals = red_card_check(samples, fixed_multiverse(), alpha, return_pvalues=True)
    if alert == "red":
        assert min(pvals) < alpha
    assert (alert == "red") == (min(pvals) < alpha / len(samples))


# -- window variant --------------------------------------------------------------

def test_monotone_input_is_left_alone():
    D = np.array([0.9, 0.7, 0.7, 0.2])
    assert np.array_equal(monotone_repair(D, True), D)
    assert np.array_equal(monotone_repair(D, False), D)


def test_upward_repair():
    assert monotone_repair(np.array([0.3, 0.5]), upward=True).tolist() == [0.5, 0.5]
    assert monotone_repair(np.array([0.3, 0.5]), upward=False).tolist() == [0.3, 0.3]


def test_window_estimate_close_to_truth():
    grid = make_price_grid(0.1, 1.0, 10, 10)
    truth = np.linspace(0.95, 0.1, 10)
    rng = np.random.default_rng(3)
    mu = MultiUniverse([binomial_universe(np.full(10, 0.5), 10)])
    window = [Observation(t, t % 10, int(rng.binomial(10, truth[t % 10]))) for t in range(1, 301)]
    u = window_variant_update(mu, window, grid)
    exact = binom.pmf(np.arange(11)[None, :], 10, truth[:, None])
    tv = 0.5 * np.abs(u.likelihood - exact).sum(axis=1)
    assert np.all(tv < 0.1)
    assert u.tag == "window"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 120))
def test_window_output_is_valid(seed, n):
    rng = np.random.default_rng(seed)
    grid = make_price_grid(0.1, 1.0, 6, 8)
    mu = MultiUniverse([binomial_universe(rng.uniform(size=6), 8) for _ in range(3)],
                       rng.dirichlet(np.ones(3)))
    window = [Observation(t, int(rng.integers(6)), int(rng.integers(9))) for t in range(1, n + 1)]
    u = window_variant_update(mu, window, grid)
    assert np.allclose(u.likelihood.sum(axis=1), 1.0, atol=1e-12) and np.all(u.likelihood >= 0)
    assert np.all(np.diff(u.demand) <= 1e-15)
