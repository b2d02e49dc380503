from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acidp.core import ConfigError, make_price_grid
from acidp.environments import (CRITEO_SCHEDULE, DemandTable, RapidDecline, RapidGrowth,
                                Seasonal, SegmentPopulation, Stationary, UpsideDown, Volatile,
                                build_case_environment, build_criteo_environment,
                                load_demand_table)

TABLE_GRID = make_price_grid(10, 500, 50, 500)


def test_case2_shift_is_exactly_point_three():
    env = build_case_environment(2, seed=3)
    diff = env.segment_means(1001) - env.segment_means(1000)
    assert np.allclose(diff, 0.3, atol=1e-15)


def test_case3_drops_back_to_baseline():
    env = build_case_environment(3, seed=3)
    assert np.allclose(env.segment_means(1000) - env.segment_means(1001), 0.3, atol=1e-15)
    assert np.allclose(env.segment_means(1001), env.base_means)


def test_case1_stationary(case_grid):
    env = build_case_environment(1, seed=5)
    assert np.array_equal(env.demand_curve(1, case_grid), env.demand_curve(1777, case_grid))


def test_case4_quarter_period_offset():
    env = build_case_environment(4, seed=0, horizon=2000)
    assert env.regime.offset(2000 // 8) == pytest.approx(0.3, abs=1e-12)


def test_case5_brownian_common_shock():
    env = build_case_environment(5, seed=0)
    path = env.regime.path
    assert path[0] == 0.0 and len(path) == 2001
    steps = np.diff(path)
    # increments are Normal(0, 1/T)
    assert abs(np.std(steps) * np.sqrt(2000) - 1.0) < 0.1
    assert np.allclose(env.segment_means(10) - env.base_means, path[10])


def test_case6_redraws_population():
    env = build_case_environment(6, seed=0)
    before, after = env.segment_means(999), env.segment_means(1000)
    assert not np.allclose(before, after)
    # Beta(0.9, 0.5) has mean 9/14
    assert abs(after.mean() - 0.9 / 1.4) < 0.03
    assert abs(before.mean() - 3 / 9) < 0.03


def test_unknown_case():
    with pytest.raises(ConfigError):
        build_case_environment(7, seed=0)


def test_same_seed_same_population():
    a, b = build_case_environment(5, seed=11), build_case_environment(5, seed=11)
    assert np.array_equal(a.base_means, b.base_means)
    assert np.array_equal(a.regime.path, b.regime.path)
    assert not np.array_equal(a.base_means, build_case_environment(5, seed=12).base_means)


def test_table_value_and_everyone_buys_below_all_valuations():
    env = build_criteo_environment()
    assert env.true_demand(1, 150) == pytest.approx(0.737)
    seg = SegmentPopulation([0.5, 0.7], noise_std=0.0)
    assert seg.true_demand(1, 0.1) == 1.0


def test_symmetric_single_segment():
    assert SegmentPopulation([0.5], noise_std=0.1).true_demand(1, 0.5) == pytest.approx(0.5)


def test_certain_and_impossible_purchases():
    rng = np.random.default_rng(0)
    env = DemandTable([1.0, 2.0], {"x": np.array([1.0, 0.0])}, [(1, 10, "x")], N=7)
    assert env.sample_batch(1, 1.0, rng) == 7
    assert env.sample_batch(1, 2.0, rng) == 0


def test_binomial_batch_mean_at_product_b_optimum():
    env = build_criteo_environment()
    rng = np.random.default_rng(1)
    draws = np.array([env.sample_batch(1, 150, rng) for _ in range(10_000)])
    se = np.sqrt(500 * 0.737 * 0.263 / 10_000)
    assert abs(se - 0.098) < 1e-3
    assert abs(draws.mean() - 368.5) <= 3 * se


@pytest.mark.parametrize("product, t, optimum", [("product_b", 1, 150), ("product_c", 2001, 280),
                                                  ("product_a", 4001, 70)])
def test_table_optima(product, t, optimum):
    env = build_criteo_environment()
    assert env.product_at(t) == product
    arm, _ = env.oracle_profit(t, TABLE_GRID)
    assert TABLE_GRID.prices[arm] == optimum
    # brute force over the raw column
    prices, cols = load_demand_table()
    assert prices[int(np.argmax(prices * cols[product]))] == optimum


def test_single_arm_oracle_is_that_arm():
    one = SimpleNamespace(array=np.array([0.4]), N=10, prices=(0.4,))
    arm, profit = SegmentPopulation([0.5], 0.1).oracle_profit(1, one)
    assert arm == 0 and profit == pytest.approx(0.4 * 10 * SegmentPopulation([0.5], 0.1).true_demand(1, 0.4))


def test_schedule_matches_regimes():
    assert CRITEO_SCHEDULE == [(1, 2000, "product_b"), (2001, 4000, "product_c"),
                               (4001, 6000, "product_a")]
    env = build_criteo_environment()
    assert [env.product_at(t) for t in (2000, 2001, 4000, 4001, 6000)] == \
        ["product_b", "product_c", "product_c", "product_a", "product_a"]


@pytest.mark.parametrize("case_id", range(1, 7))
def test_demand_monotone_in_price(case_id, case_grid):
    env = build_case_environment(case_id, seed=case_id)
    for t in (1, 500, 1000, 1001, 1500, 2000):
        assert np.all(np.diff(env.demand_curve(t, case_grid)) <= 1e-15)


def test_table_monotone():
    _, cols = load_demand_table()
    for col in cols.values():
        assert np.all(np.diff(col) <= 0)
        assert np.all((col >= 0) & (col <= 1))


def test_curve_matches_pointwise(case_grid):
    env = build_case_environment(4, seed=2)
    for t in (3, 250, 999):
        curve = env.demand_curve(t, case_grid)
        assert np.allclose(curve, [env.true_demand(t, a) for a in case_grid.prices], atol=1e-14)


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 6), st.integers(1, 2000), st.integers(0, 19))
def test_batch_mean_within_four_se(case_id, t, arm):
    grid = make_price_grid(0.01, 1.0, 20, 10)
    env = build_case_environment(case_id, seed=case_id)
    price = grid.prices[arm]
    D = env.true_demand(t, price)
    rng = np.random.default_rng(t)
    draws = np.array([env.sample_batch(t, price, rng) for _ in range(10_000)])
    se = max(np.sqrt(10 * D * (1 - D) / 10_000), 1e-9)
    assert abs(draws.mean() - 10 * D) <= 4 * se + 1e-12


def test_customer_and_binomial_sampling_agree():
    env_c = build_case_environment(1, seed=0, sampling="customers")
    env_b = build_case_environment(1, seed=0, sampling="binomial")
    rng = np.random.default_rng(0)
    c = np.mean([env_c.sample_batch(1, 0.3, rng) for _ in range(5000)])
    b = np.mean([env_b.sample_batch(1, 0.3, rng) for _ in range(5000)])
    assert abs(c - b) < 0.15


def test_case2_and_case3_same_oracle_total(case_grid):
    e2, e3 = build_case_environment(2, seed=9), build_case_environment(3, seed=9)
    tot2 = sum(e2.oracle_profit(t, case_grid)[1] for t in range(1, 2001))
    tot3 = sum(e3.oracle_profit(t, case_grid)[1] for t in range(1, 2001))
    assert abs(tot2 - tot3) / tot2 < 0.005


def test_regime_offsets():
    assert Stationary().offset(5) == 0.0
    assert RapidGrowth(0.3, 1001).offset(1000) == 0.0 and RapidGrowth(0.3, 1001).offset(1001) == 0.3
    assert RapidDecline(0.3, 1001).offset(1000) == 0.3 and RapidDecline(0.3, 1001).offset(1001) == 0.0
    assert Seasonal(0.3, 2000).offset(0) == 0.0
    assert UpsideDown(np.zeros(2), 10).offset(50) == 0.0
    v = Volatile(np.array([0.0, 0.1, 0.2]))
    assert v.offset(99) == 0.2


def test_table_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("cost,a\n1,0.5\n")
    with pytest.raises(ConfigError):
        load_demand_table(bad)
    bad.write_text("price,a\n1,0.5,0.2\n")
    with pytest.raises(ConfigError):
        load_demand_table(bad)
    with pytest.raises(ConfigError):
        DemandTable([1.0], {"a": np.array([1.5])}, [(1, 2, "a")])
    with pytest.raises(ConfigError):
        DemandTable([1.0], {"a": np.array([0.5])}, [(1, 2, "b")])


def test_bad_population():
    with pytest.raises(ConfigError):
        SegmentPopulation([], 0.1)
    with pytest.raises(ConfigError):
        SegmentPopulation([0.5], -0.1)
    with pytest.raises(ConfigError):
        SegmentPopulation([0.5], 0.1, sampling="poisson")
