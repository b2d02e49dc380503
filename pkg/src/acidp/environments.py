"""True market simulators.

Two families: a segmented valuation population whose valuations move over time
(the six synthetic scenarios), and a table of per-price conversion rates with a
product schedule (the real-data scenario).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .core import ConfigError, PriceGrid

DEFAULT_HORIZON = 2000
SHIFT_ROUND = 1001
CASE_NOISE_STD = 0.1


# ---------------------------------------------------------------------------
# shift regimes


@dataclass(frozen=True)
class Stationary:
    def offset(self, t: int) -> float:
        return 0.0


@dataclass(frozen=True)
class RapidGrowth:
    delta: float = 0.3
    t_shift: int = SHIFT_ROUND

    def offset(self, t: int) -> float:
        return self.delta if t >= self.t_shift else 0.0


@dataclass(frozen=True)
class RapidDecline:
    delta: float = 0.3
    t_shift: int = SHIFT_ROUND

    def offset(self, t: int) -> float:
        return self.delta if t < self.t_shift else 0.0


@dataclass(frozen=True)
class Seasonal:
    amplitude: float = 0.3
    horizon: int = DEFAULT_HORIZON
    frequency: float = 4.0

    def offset(self, t: int) -> float:
        return self.amplitude * np.sin(self.frequency * t * np.pi / self.horizon)


@dataclass(frozen=True)
class Volatile:
    """Common Brownian shock B_t = B_{t-1} + xi / sqrt(scale), B_0 = 0."""

    path: np.ndarray = field(repr=False)

    @classmethod
    def draw(cls, horizon: int, rng: np.random.Generator, scale: float | None = None):
        scale = horizon if scale is None else scale
        steps = rng.standard_normal(horizon) / np.sqrt(scale)
        return cls(np.concatenate([[0.0], np.cumsum(steps)]))

    def offset(self, t: int) -> float:
        # rounds past the precomputed path hold the last level
        return float(self.path[min(t, len(self.path) - 1)])


@dataclass(frozen=True)
class UpsideDown:
    """Segment means are replaced by a fresh population from ``t_shift`` on."""

    new_means: np.ndarray = field(repr=False)
    t_shift: int = 1000

    def offset(self, t: int) -> float:
        return 0.0


ShiftRegime = Stationary | RapidGrowth | RapidDecline | Seasonal | Volatile | UpsideDown


# ---------------------------------------------------------------------------
# environments


class Environment:
    """A true demand model. Subclasses implement ``true_demand`` and ``sample_batch``."""

    N: int

    def true_demand(self, t: int, price: float) -> float:
        raise NotImplementedError

    def demand_curve(self, t: int, grid: PriceGrid) -> np.ndarray:
        return np.array([self.true_demand(t, a) for a in grid.prices])

    def sample_batch(self, t: int, price: float, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def oracle_profit(self, t: int, grid: PriceGrid) -> tuple[int, float]:
        """(best 0-based arm, expected batch profit); ties go to the lower index."""
        profits = grid.array * grid.N * self.demand_curve(t, grid)
        k = int(np.argmax(profits))
        return k, float(profits[k])


class SegmentPopulation(Environment):
    """Customers drawn uniformly from equal-sized segments, valuation = segment mean
    + Normal noise + a time-dependent shift."""

    def __init__(self, segment_means, noise_std: float = CASE_NOISE_STD,
                 regime: ShiftRegime | None = None, N: int = 10,
                 sampling: str = "customers"):
        self.base_means = np.asarray(segment_means, dtype=float)
        if self.base_means.ndim != 1 or self.base_means.size < 1:
            raise ConfigError("need at least one segment")
        if noise_std < 0:
            raise ConfigError("noise std must be non-negative")
        if sampling not in ("customers", "binomial"):
            raise ConfigError(f"unknown sampling mode {sampling!r}")
        self.noise_std = float(noise_std)
        self.regime = regime if regime is not None else Stationary()
        self.N = int(N)
        self.sampling = sampling
        self._curves: dict = {}

    def segment_means(self, t: int) -> np.ndarray:
        base = self.base_means
        if isinstance(self.regime, UpsideDown) and t >= self.regime.t_shift:
            base = self.regime.new_means
        return base + self.regime.offset(t)

    def true_demand(self, t: int, price: float) -> float:
        v = self.segment_means(t)
        if self.noise_std == 0:
            return float(np.mean(v >= price))
        return float(np.mean(ndtr((v - price) / self.noise_std)))

    def demand_curve(self, t: int, grid: PriceGrid) -> np.ndarray:
        # the curve depends on t only through the population state, so cache by it
        new = isinstance(self.regime, UpsideDown) and t >= self.regime.t_shift
        key = (new, self.regime.offset(t), grid.prices)
        cached = self._curves.get(key)
        if cached is not None:
            return cached.copy()
        v = self.segment_means(t)[:, None]
        a = grid.array[None, :]
        if self.noise_std == 0:
            curve = np.mean(v >= a, axis=0)
        else:
            curve = np.mean(ndtr((v - a) / self.noise_std), axis=0)
        if len(self._curves) < 64:
            self._curves[key] = curve
        return curve.copy()

    def sample_batch(self, t: int, price: float, rng: np.random.Generator) -> int:
        if self.sampling == "binomial":
            return int(rng.binomial(self.N, self.true_demand(t, price)))
        v = self.segment_means(t)
        # draw segments and noise regardless of price: common random numbers across policies
        seg = rng.integers(0, v.size, size=self.N)
        noise = rng.standard_normal(self.N) * self.noise_std
        return int(np.sum(v[seg] + noise >= price))


class DemandTable(Environment):
    """Per-product conversion probabilities with a round -> product schedule."""

    def __init__(self, prices, products: dict[str, np.ndarray],
                 schedule: list[tuple[int, int, str]], N: int = 500):
        self.prices = np.asarray(prices, dtype=float)
        self.products = {k: np.asarray(v, dtype=float) for k, v in products.items()}
        for name, col in self.products.items():
            if col.shape != self.prices.shape:
                raise ConfigError(f"product {name} has {col.size} rows, expected {self.prices.size}")
            if np.any(col < 0) or np.any(col > 1):
                raise ConfigError(f"product {name} has probabilities outside [0, 1]")
        for start, end, name in schedule:
            if name not in self.products:
                raise ConfigError(f"schedule names unknown product {name!r}")
            if end < start:
                raise ConfigError(f"empty schedule range {start}..{end}")
        self.schedule = sorted(schedule)
        self.N = int(N)

    def product_at(self, t: int) -> str:
        for start, end, name in self.schedule:
            if start <= t <= end:
                return name
        # past the schedule the last product stays active
        return self.schedule[-1][2]

    def _row(self, price: float) -> int:
        hits = np.flatnonzero(np.isclose(self.prices, price, rtol=1e-12, atol=1e-9))
        if hits.size == 0:
            raise KeyError(f"price {price} not in demand table")
        return int(hits[0])

    def true_demand(self, t: int, price: float) -> float:
        return float(self.products[self.product_at(t)][self._row(price)])

    def sample_batch(self, t: int, price: float, rng: np.random.Generator) -> int:
        return int(rng.binomial(self.N, self.true_demand(t, price)))


# ---------------------------------------------------------------------------
# factories


def build_case_environment(case_id: int, seed: int, horizon: int = DEFAULT_HORIZON,
                           N: int = 10, n_segments: int = 1000,
                           noise_std: float = CASE_NOISE_STD,
                           sampling: str = "customers") -> SegmentPopulation:
    """One of the six synthetic scenarios; ``seed`` fixes the population and shift path."""
    if case_id not in range(1, 7):
        raise ConfigError(f"unknown case {case_id!r}; expected 1..6")
    rng = np.random.default_rng(seed)
    means = rng.beta(3, 6, size=n_segments)
    half = horizon // 2
    regime: ShiftRegime
    if case_id == 1:
        regime = Stationary()
    elif case_id == 2:
        regime = RapidGrowth(0.3, half + 1)
    elif case_id == 3:
        regime = RapidDecline(0.3, half + 1)
    elif case_id == 4:
        regime = Seasonal(0.3, horizon)
    elif case_id == 5:
        regime = Volatile.draw(horizon, rng)
    else:
        regime = UpsideDown(rng.beta(0.9, 0.5, size=n_segments), half)
    return SegmentPopulation(means, noise_std, regime, N=N, sampling=sampling)


CRITEO_SCHEDULE = [(1, 2000, "product_b"), (2001, 4000, "product_c"), (4001, 6000, "product_a")]


def load_demand_table(path: str | Path | None = None) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Read a ``price,product_a,...`` CSV; the bundled Criteo table when ``path`` is None."""
    if path is None:
        text = resources.files("acidp").joinpath("data/criteo_demand.csv").read_text()
    else:
        text = Path(path).read_text()
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if not header or header[0].strip() != "price" or len(header) < 2:
        raise ConfigError(f"demand table header must start with 'price', got {header}")
    names = [h.strip() for h in header[1:]]
    prices, cols = [], [[] for _ in names]
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ConfigError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            prices.append(float(row[0]))
            for c, v in zip(cols, row[1:]):
                c.append(float(v))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return np.array(prices), {n: np.array(c) for n, c in zip(names, cols)}


def build_criteo_environment(path: str | Path | None = None, N: int = 500,
                             schedule=None) -> DemandTable:
    prices, products = load_demand_table(path)
    return DemandTable(prices, products, schedule or CRITEO_SCHEDULE, N=N)
