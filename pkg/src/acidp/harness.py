"""Experiment runner: (policy x environment x seed) grids, traces and summaries."""

from __future__ import annotations

import csv
import logging
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .core import ConfigError, Observation, Policy, PriceGrid, TrialTrace, make_price_grid
from .environments import (CRITEO_SCHEDULE, Environment, build_case_environment,
                           build_criteo_environment)
from .policies import make_policy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["policy", "hyperparameters", "mean_regret", "standard_error", "max", "min"]
_ENV_STREAM = 0x454E56  # keeps environment draws apart from every policy stream


@dataclass
class PolicySpec:
    key: str
    params: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if not self.label:
            self.label = self.key + "".join(f"_{k}={v}" for k, v in sorted(self.params.items()))

    @property
    def hyperparameters(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))


@dataclass
class ExperimentConfig:
    policies: list[PolicySpec]
    case: int | None = None
    table: str | None = None
    schedule: list[tuple[int, int, str]] | None = None
    horizon: int = 2000
    low: float = 0.01
    high: float = 1.0
    K: int = 20
    N: int = 10
    trials: int = 10
    base_seed: int = 0
    out: str | None = None
    workers: int = 1
    sampling: str = "customers"
    common_random_numbers: bool = True
    verbose_audit: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if (self.case is None) == (self.table is None):
            raise ConfigError("environment needs exactly one of 'case' or 'table'")
        if not self.policies:
            raise ConfigError("no policies configured")
        self.grid  # validates the grid eagerly

    @property
    def grid(self) -> PriceGrid:
        return make_price_grid(self.low, self.high, self.K, self.N)

    @classmethod
    def criteo(cls, policies, table: str | None = None, **kw) -> "ExperimentConfig":
        kw = {"horizon": 6000, "low": 10, "high": 500, "K": 50, "N": 500, **kw}
        return cls(policies=policies, table=table or "", **kw)

    def build_environment(self, trial: int) -> Environment:
        if self.case is not None:
            seed = _seed_entropy(self.base_seed, "env", trial)
            return build_case_environment(self.case, seed, self.horizon, self.N,
                                          sampling=self.sampling)
        return build_criteo_environment(self.table or None, self.N,
                                        self.schedule or CRITEO_SCHEDULE)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a TOML experiment file with [experiment], [environment], [grid] and [[policy]]."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    exp = doc.get("experiment", {})
    env = doc.get("environment", {})
    grid = doc.get("grid", {})
    pols = doc.get("policy", [])
    if not isinstance(pols, list) or not pols:
        raise ConfigError(f"{path}: at least one [[policy]] table is required")
    specs = []
    for entry in pols:
        entry = dict(entry)
        key = entry.pop("key", None)
        if key is None:
            raise ConfigError(f"{path}: policy entry without 'key'")
        label = entry.pop("label", "")
        specs.append(PolicySpec(key, entry, label))
    schedule = env.get("schedule")
    if schedule is not None:
        schedule = [(int(s["start"]), int(s["end"]), str(s["product"])) for s in schedule]
    table = env.get("table")
    if table is not None and table != "" and not Path(table).is_absolute():
        table = str(path.parent / table)
    known = {"horizon", "trials", "base_seed", "out", "workers", "sampling",
             "common_random_numbers", "verbose_audit"}
    extra = set(exp) - known
    if extra:
        raise ConfigError(f"{path}: unknown [experiment] keys {sorted(extra)}")
    return ExperimentConfig(
        policies=specs, case=env.get("case"), table=table, schedule=schedule,
        low=grid.get("low", 0.01), high=grid.get("high", 1.0),
        K=grid.get("K", 20), N=grid.get("N", 10), **exp)


# ---------------------------------------------------------------------------
# seeding


def _seed_entropy(base_seed: int, stream: str, trial: int) -> int:
    """Deterministic 64-bit seed for (base_seed, stream name, trial)."""
    ss = np.random.SeedSequence([base_seed, zlib.crc32(stream.encode()), trial])
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def policy_rng(base_seed: int, label: str, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, zlib.crc32(label.encode()), trial]))


def env_rng(base_seed: int, trial: int, label: str | None = None) -> np.random.Generator:
    """Customer-draw stream; shared by all policies of a trial unless ``label`` is given."""
    key = [base_seed, _ENV_STREAM, trial]
    if label is not None:
        key.append(zlib.crc32(label.encode()))
    return np.random.default_rng(np.random.SeedSequence(key))


# ---------------------------------------------------------------------------
# running


def run_trial(policy: Policy, env: Environment, T: int, rng: np.random.Generator,
              on_round: Callable[[int, Policy], None] | None = None) -> TrialTrace:
    grid = policy.grid
    trace = TrialTrace(grid)
    for t in range(1, T + 1):
        arm = policy.choose(t)
        if not 0 <= arm < grid.K:
            raise RuntimeError(f"round {t}: policy {policy.key} chose invalid arm {arm}")
        d = env.sample_batch(t, grid.prices[arm], rng)
        policy.observe(Observation(t, arm, d))
        _, oracle = env.oracle_profit(t, grid)
        trace.record(arm, d, oracle, policy.alert)
        if on_round is not None:
            on_round(t, policy)
    return trace


@dataclass
class SummaryRow:
    policy: str
    hyperparameters: str
    mean_regret: float
    standard_error: float
    max: float
    min: float

    @classmethod
    def from_regrets(cls, policy: str, hyperparameters: str, regrets) -> "SummaryRow":
        r = np.asarray(regrets, dtype=float)
        # spread across trials (sample standard deviation), as in the published tables
        se = float(r.std(ddof=1)) if r.size > 1 else 0.0
        return cls(policy, hyperparameters, float(r.mean()), se, float(r.max()), float(r.min()))

    def as_row(self) -> list[Any]:
        return [self.policy, self.hyperparameters, repr(self.mean_regret),
                repr(self.standard_error), repr(self.max), repr(self.min)]


def _run_one(config: ExperimentConfig, spec: PolicySpec, trial: int) -> tuple[TrialTrace, list[dict]]:
    grid = config.grid
    env = config.build_environment(trial)
    params = dict(spec.params)
    if config.verbose_audit and spec.key.startswith("acidp"):
        params["verbose_audit"] = True
    policy = make_policy(spec.key, grid, policy_rng(config.base_seed, spec.label, trial), **params)
    erng = env_rng(config.base_seed, trial, None if config.common_random_numbers else spec.label)
    trace = run_trial(policy, env, config.horizon, erng)
    return trace, getattr(policy, "audit_log", [])


def _check_out_dir(out: str | None) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {path} is not writable: {exc}") from exc
    return path


def trace_filename(label: str, trial: int) -> str:
    safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in label)
    return f"trace_{safe}_{trial}.csv"


def run_experiment(config: ExperimentConfig) -> tuple[list[SummaryRow], dict[str, list[TrialTrace]]]:
    """Run every policy for ``trials`` trials; writes traces and summary.csv when ``out`` is set."""
    out = _check_out_dir(config.out)
    jobs = [(spec, i) for spec in config.policies for i in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, [config] * len(jobs), *zip(*jobs)))
    else:
        results = [_run_one(config, spec, i) for spec, i in jobs]

    traces: dict[str, list[TrialTrace]] = {}
    for (spec, i), (trace, audit_log) in zip(jobs, results):
        traces.setdefault(spec.label, []).append(trace)
        if out is not None:
            trace.to_csv(out / trace_filename(spec.label, i))
            if audit_log:
                _write_audit_log(out / trace_filename(spec.label, i).replace("trace_", "audit_")
                                 .replace(".csv", ".log"), audit_log)
    rows = [SummaryRow.from_regrets(spec.key, spec.hyperparameters,
                                    [t.total_regret for t in traces[spec.label]])
            for spec in config.policies]
    if out is not None:
        write_summary(rows, out / "summary.csv")
    return rows, traces


def write_summary(rows: list[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(r.as_row() for r in rows)


def _write_audit_log(path: Path, entries: list[dict]) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(" ".join(f"{k}={v}" for k, v in e.items()) + "\n")


def default_workers() -> int:
    return max(1, min(8, (os.cpu_count() or 1)))
