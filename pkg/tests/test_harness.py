import csv
import time

import numpy as np
import pytest

from acidp.core import ConfigError, TrialTrace, trace_regret_from_rows
from acidp.harness import (SUMMARY_HEADER, ExperimentConfig, PolicySpec, SummaryRow,
                           load_config, run_experiment, run_trial, trace_filename)
from acidp.policies import Clairvoyant, FixedArm


def test_clairvoyant_has_zero_mean_regret():
    cfg = ExperimentConfig([PolicySpec("ts")], case=4, horizon=100, trials=1)
    totals = []
    for trial in range(100):
        env = cfg.build_environment(trial)
        trace = run_trial(Clairvoyant(cfg.grid, env), env, 100, np.random.default_rng(trial))
        totals.append(trace.total_regret)
    totals = np.asarray(totals)
    se = totals.std(ddof=1) / np.sqrt(totals.size)
    assert abs(totals.mean()) <= 3 * se


def test_worst_arm_regret_grows_linearly():
    cfg = ExperimentConfig([PolicySpec("ts")], case=1, trials=1)
    ratios = []
    for trial in range(10):
        env = cfg.build_environment(trial)
        profits = cfg.grid.array * cfg.grid.N * env.demand_curve(1, cfg.grid)
        worst = int(np.argmin(profits))
        trace = run_trial(FixedArm(cfg.grid, worst), env, 2000, np.random.default_rng(trial))
        cum = trace.cumulative_regret
        ratios.append(cum[1999] / cum[999])
    assert 1.8 <= np.mean(ratios) <= 2.2


def test_trial_replays_identically():
    cfg = ExperimentConfig([PolicySpec("acidp"), PolicySpec("ucbpi")], case=5, horizon=500,
                           trials=2, base_seed=3)
    _, a = run_experiment(cfg)
    _, b = run_experiment(cfg)
    for label in a:
        for ta, tb in zip(a[label], b[label]):
            assert ta.arms == tb.arms and ta.demands == tb.demands
            assert ta.oracle_profits == tb.oracle_profits and ta.alerts == tb.alerts


def test_single_trial_summary():
    row = SummaryRow.from_regrets("ts", "", [12.5])
    assert row.standard_error == 0.0 and row.min == row.max == row.mean_regret == 12.5


def test_summary_ordering():
    row = SummaryRow.from_regrets("ts", "", [3.0, 1.0, 8.0])
    assert row.min <= row.mean_regret <= row.max
    assert row.standard_error == pytest.approx(np.std([3.0, 1.0, 8.0], ddof=1))


def test_summary_recomputed_from_trace_files(tmp_path):
    cfg = ExperimentConfig([PolicySpec("ts"), PolicySpec("eg", {"epsilon": 0.05})],
                           case=2, horizon=300, trials=3, out=str(tmp_path))
    rows, _ = run_experiment(cfg)
    with open(tmp_path / "summary.csv") as fh:
        reader = csv.reader(fh)
        assert next(reader) == SUMMARY_HEADER
        written = list(reader)
    for spec, row, line in zip(cfg.policies, rows, written):
        regrets = []
        for i in range(cfg.trials):
            with open(tmp_path / trace_filename(spec.label, i)) as fh:
                regrets.append(trace_regret_from_rows(list(csv.DictReader(fh))))
        recomputed = SummaryRow.from_regrets(spec.key, spec.hyperparameters, regrets)
        for got, want in zip(map(float, line[2:]), [recomputed.mean_regret, recomputed.standard_error,
                                                     recomputed.max, recomputed.min]):
            assert got == pytest.approx(want, abs=1e-9)
        assert line[0] == spec.key and line[1] == spec.hyperparameters
        assert row.mean_regret == pytest.approx(recomputed.mean_regret, abs=1e-9)
    trace = TrialTrace.from_csv(tmp_path / trace_filename("ts", 0), cfg.grid)
    assert len(trace) == 300


def test_seed_isolation():
    base = [PolicySpec("ts"), PolicySpec("eg", {"epsilon": 0.1})]
    changed = [PolicySpec("ts"), PolicySpec("eg", {"epsilon": 0.15})]
    _, a = run_experiment(ExperimentConfig(base, case=3, horizon=400, trials=2))
    _, b = run_experiment(ExperimentConfig(changed, case=3, horizon=400, trials=2))
    for ta, tb in zip(a["ts"], b["ts"]):
        assert ta.arms == tb.arms and ta.demands == tb.demands


def test_common_random_numbers():
    # two fixed-price policies see the same customers when they offer the same price
    cfg = ExperimentConfig([PolicySpec("ts")], case=1, horizon=50, trials=1)
    env = cfg.build_environment(0)
    from acidp.harness import env_rng
    t1 = run_trial(FixedArm(cfg.grid, 7), env, 50, env_rng(0, 0))
    t2 = run_trial(FixedArm(cfg.grid, 7), env, 50, env_rng(0, 0))
    assert t1.demands == t2.demands


def test_unwritable_output_fails_before_running(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = ExperimentConfig([PolicySpec("ts")], case=1, horizon=10, trials=1,
                           out=str(blocker / "sub"))
    with pytest.raises(OSError):
        run_experiment(cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig([PolicySpec("ts")], case=1, trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig([PolicySpec("ts")], case=1, horizon=0)
    with pytest.raises(ConfigError):
        ExperimentConfig([PolicySpec("ts")])
    with pytest.raises(ConfigError):
        ExperimentConfig([], case=1)
    with pytest.raises(ConfigError):
        ExperimentConfig([PolicySpec("ts")], case=1, K=1)


def test_load_config(tmp_path):
    (tmp_path / "table.csv").write_text("price,p\n1,0.9\n2,0.5\n")
    path = tmp_path / "exp.toml"
    path.write_text("""
[experiment]
horizon = 30
trials = 2
base_seed = 5

[environment]
table = "table.csv"
schedule = [{start = 1, end = 30, product = "p"}]

[grid]
low = 1.0
high = 2.0
K = 2
N = 20

[[policy]]
key = "ucb"
c = 2.0

[[policy]]
key = "acidp"
L_P = 1
label = "acidp-small"
""")
    cfg = load_config(path)
    assert cfg.horizon == 30 and cfg.trials == 2 and cfg.base_seed == 5
    assert cfg.table == str(tmp_path / "table.csv")
    assert [p.label for p in cfg.policies] == ["ucb_c=2.0", "acidp-small"]
    rows, traces = run_experiment(cfg)
    assert len(rows) == 2 and all(len(t) == 30 for t in traces["acidp-small"])


@pytest.mark.parametrize("text, msg", [
    ("[experiment]\nhorizon = 3\n", "policy"),
    ("[experiment]\nspeed = 3\n[[policy]]\nkey='ts'\n[environment]\ncase=1\n", "unknown"),
    ("[[policy]]\nc = 1\n[environment]\ncase = 1\n", "without 'key'"),
    ("this is not toml", "exp.toml"),
])
def test_config_errors(tmp_path, text, msg):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        load_config(path)


def test_missing_config():
    with pytest.raises(ConfigError, match="config not found"):
        load_config("definitely-missing.toml")


def test_parallel_workers_match_serial():
    specs = [PolicySpec("ts"), PolicySpec("ucb")]
    serial = run_experiment(ExperimentConfig(specs, case=4, horizon=200, trials=2))[0]
    parallel = run_experiment(ExperimentConfig(specs, case=4, horizon=200, trials=2, workers=2))[0]
    assert [r.as_row() for r in serial] == [r.as_row() for r in parallel]


def test_case2_ucb_far_behind_acidp():
    rows, _ = run_experiment(ExperimentConfig([PolicySpec("acidp"), PolicySpec("ucb", {"c": 1})],
                                              case=2, trials=10))
    assert rows[1].mean_regret > 3 * rows[0].mean_regret


def test_full_canned_suite_time_budget():
    keys = ["acidp", "eg", "ucb", "ts", "ucbpi"]
    start = time.perf_counter()
    for case in range(1, 7):
        run_experiment(ExperimentConfig([PolicySpec(k) for k in keys], case=case, trials=10))
    assert time.perf_counter() - start < 600
