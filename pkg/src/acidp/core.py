"""Shared types: price grids, observations, histories, the policy contract and
regret accounting."""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

ALERTS = ("none", "yellow", "red")
TRACE_HEADER = ["t", "arm", "price", "demand", "profit", "oracle_profit", "cum_regret", "alert"]


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


@dataclass(frozen=True)
class PriceGrid:
    """Ordered finite price set offered to batches of ``batch_size`` customers."""

    prices: tuple[float, ...]
    batch_size: int

    def __post_init__(self):
        prices = tuple(float(p) for p in self.prices)
        object.__setattr__(self, "prices", prices)
        if len(prices) < 2:
            raise ConfigError("price grid needs at least 2 prices")
        if any(p <= 0 for p in prices):
            raise ConfigError("prices must be positive")
        if any(b <= a for a, b in zip(prices, prices[1:])):
            raise ConfigError("prices must be strictly increasing")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch size N must be a positive integer")
        object.__setattr__(self, "batch_size", int(self.batch_size))

    @property
    def K(self) -> int:
        return len(self.prices)

    @property
    def N(self) -> int:
        return self.batch_size

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.prices, dtype=float)

    def index_of(self, price: float) -> int:
        """0-based index of ``price``; raises KeyError when it is not on the grid."""
        hits = np.flatnonzero(np.isclose(self.array, price, rtol=1e-12, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"price {price} not on grid")
        return int(hits[0])


def make_price_grid(low: float, high: float, K: int, N: int) -> PriceGrid:
    """K equally spaced prices from ``low`` to ``high`` inclusive."""
    if not (0 < low < high):
        raise ConfigError(f"need 0 < low < high, got low={low}, high={high}")
    if int(K) != K or K < 2:
        raise ConfigError(f"need K >= 2, got {K}")
    if int(N) != N or N < 1:
        raise ConfigError(f"need N >= 1, got {N}")
    prices = np.linspace(low, high, int(K))
    prices[0], prices[-1] = low, high
    return PriceGrid(tuple(prices.tolist()), int(N))


def realized_profit(price: float, demand: int) -> float:
    return float(price) * float(demand)


def regret_step(oracle_profit: float, realized: float) -> float:
    # may be negative for a lucky batch
    return float(oracle_profit) - float(realized)


@dataclass(frozen=True)
class Observation:
    """One pricing round: arm is 0-based internally."""

    t: int
    arm: int
    demand: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"round must be positive, got {self.t}")
        if self.demand < 0:
            raise ValueError(f"negative demand {self.demand}")


class History:
    """Append-only log of observations with consecutive rounds."""

    def __init__(self, observations: Iterable[Observation] = ()):
        self._obs: list[Observation] = []
        for o in observations:
            self.append(o)

    def append(self, obs: Observation) -> None:
        if self._obs and obs.t != self._obs[-1].t + 1:
            raise ValueError(f"round {obs.t} does not follow {self._obs[-1].t}")
        self._obs.append(obs)

    def __len__(self) -> int:
        return len(self._obs)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self._obs)

    def __getitem__(self, i):
        return self._obs[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, History) and self._obs == other._obs

    def to_json(self) -> str:
        # arms are 1-based in every external format
        return json.dumps([[o.t, o.arm + 1, o.demand] for o in self._obs])

    @classmethod
    def from_json(cls, text: str) -> "History":
        return cls(Observation(t, arm - 1, d) for t, arm, d in json.loads(text))


class Policy(ABC):
    """Pricing policy: ``choose`` picks a 0-based arm, ``observe`` learns from the outcome.

    The random source is injected at construction; a policy instance belongs to
    exactly one trial.
    """

    key = "policy"

    def __init__(self, grid: PriceGrid, rng: np.random.Generator | None = None):
        self.grid = grid
        self.rng = rng if rng is not None else np.random.default_rng()

    @abstractmethod
    def choose(self, t: int) -> int: ...

    @abstractmethod
    def observe(self, obs: Observation) -> None: ...

    @property
    def alert(self) -> str:
        """Alert raised by the most recent observation."""
        return "none"


@dataclass
class TrialTrace:
    """Per-round record of one trial."""

    grid: PriceGrid
    arms: list[int] = field(default_factory=list)
    demands: list[int] = field(default_factory=list)
    oracle_profits: list[float] = field(default_factory=list)
    alerts: list[str] = field(default_factory=list)

    def record(self, arm: int, demand: int, oracle_profit: float, alert: str = "none") -> None:
        if alert not in ALERTS:
            raise ValueError(f"unknown alert {alert!r}")
        self.arms.append(int(arm))
        self.demands.append(int(demand))
        self.oracle_profits.append(float(oracle_profit))
        self.alerts.append(alert)

    def __len__(self) -> int:
        return len(self.arms)

    @property
    def prices(self) -> np.ndarray:
        return self.grid.array[np.asarray(self.arms, dtype=int)]

    @property
    def profits(self) -> np.ndarray:
        return self.prices * np.asarray(self.demands, dtype=float)

    @property
    def regrets(self) -> np.ndarray:
        return np.asarray(self.oracle_profits, dtype=float) - self.profits

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regrets)

    @property
    def total_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.arms else 0.0

    def rows(self) -> Iterator[list]:
        prices, profits, cum = self.prices, self.profits, self.cumulative_regret
        for i in range(len(self)):
            yield [i + 1, self.arms[i] + 1, repr(float(prices[i])), self.demands[i],
                   repr(float(profits[i])), repr(self.oracle_profits[i]),
                   repr(float(cum[i])), self.alerts[i]]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path: str | Path, grid: PriceGrid) -> "TrialTrace":
        trace = cls(grid)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TRACE_HEADER:
                raise ValueError(f"unexpected trace header {reader.fieldnames}")
            for row in reader:
                trace.record(int(row["arm"]) - 1, int(row["demand"]),
                             float(row["oracle_profit"]), row["alert"])
        return trace


def trace_regret_from_rows(rows: Sequence[dict]) -> float:
    """Recompute cumulative regret from raw CSV rows (independent of TrialTrace)."""
    return sum(float(r["oracle_profit"]) - float(r["profit"]) for r in rows)
