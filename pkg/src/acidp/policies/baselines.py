"""Per-arm baseline policies: epsilon-greedy, the UCB family and Thompson sampling.

Rewards fed to the index policies are raw batch profits, price times the
number of purchases, so exploration constants are in profit units.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import Observation, Policy, PriceGrid


class ArmStats:
    """Pull counts and first/second moments of the batch profit per arm."""

    def __init__(self, K: int):
        self.counts = np.zeros(K, dtype=int)
        self.sums = np.zeros(K)
        self.sq_sums = np.zeros(K)

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.sq_sums[arm] += reward * reward

    @property
    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def first_unvisited(self, active: np.ndarray | None = None) -> int | None:
        mask = self.counts == 0
        if active is not None:
            mask &= active
        idx = np.flatnonzero(mask)
        return int(idx[0]) if idx.size else None


class _IndexPolicy(Policy):
    def __init__(self, grid: PriceGrid, rng=None):
        super().__init__(grid, rng)
        self.stats = ArmStats(grid.K)

    def observe(self, obs: Observation) -> None:
        self.stats.update(obs.arm, self.grid.prices[obs.arm] * obs.demand)


def eg_step(stats: ArmStats, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(stats.counts.size))
    first = stats.first_unvisited()
    if first is not None:
        return first
    return int(np.argmax(stats.means))


def ucb_index(stats: ArmStats, t: int, c: float) -> np.ndarray:
    return stats.means + c * np.sqrt(math.log(max(t, 1)) / stats.counts)


def ucb_step(stats: ArmStats, t: int, c: float) -> int:
    first = stats.first_unvisited()
    if first is not None:
        return first
    return int(np.argmax(ucb_index(stats, t, c)))


def ucb_tuned_width(stats: ArmStats, t: int) -> np.ndarray:
    """min(1/4, V) with V = mean square - squared mean + sqrt(2 log t / n)."""
    n = stats.counts
    log_t = math.log(max(t, 1))
    V = stats.sq_sums / n - stats.means ** 2 + np.sqrt(2 * log_t / n)
    return np.minimum(0.25, V)


def ucb_tuned_step(stats: ArmStats, t: int) -> int:
    first = stats.first_unvisited()
    if first is not None:
        return first
    log_t = math.log(max(t, 1))
    index = stats.means + ucb_tuned_width(stats, t) * np.sqrt(log_t / stats.counts)
    return int(np.argmax(index))


class EpsilonGreedy(_IndexPolicy):
    key = "eg"

    def __init__(self, grid: PriceGrid, rng=None, epsilon: float = 0.1):
        super().__init__(grid, rng)
        self.epsilon = float(epsilon)

    def choose(self, t: int) -> int:
        return eg_step(self.stats, self.epsilon, self.rng)


class UCB(_IndexPolicy):
    key = "ucb"

    def __init__(self, grid: PriceGrid, rng=None, c: float = 1.0):
        super().__init__(grid, rng)
        self.c = float(c)

    def choose(self, t: int) -> int:
        return ucb_step(self.stats, t, self.c)


class UCBTuned(_IndexPolicy):
    key = "ucb-tuned"

    def choose(self, t: int) -> int:
        return ucb_tuned_step(self.stats, t)


class UCBPI(_IndexPolicy):
    """UCB with a price-scaled bonus and elimination of arms whose profit upper
    bound falls below another arm's lower bound.

    Demand-fraction Hoeffding bounds at confidence 1/t^2 are tightened across
    arms using monotone demand: a higher price never sells more than a lower one.
    """

    key = "ucbpi"

    def __init__(self, grid: PriceGrid, rng=None):
        super().__init__(grid, rng)
        self.active = np.ones(grid.K, dtype=bool)
        self.demand_sums = np.zeros(grid.K)
        self.eliminated_at: dict[int, int] = {}

    def observe(self, obs: Observation) -> None:
        super().observe(obs)
        self.demand_sums[obs.arm] += obs.demand

    def demand_bounds(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        customers = self.stats.counts * self.grid.N
        seen = customers > 0
        phat = np.where(seen, self.demand_sums / np.maximum(customers, 1), 0.5)
        rad = np.where(seen, np.sqrt(math.log(2 * max(t, 2) ** 2) / (2 * np.maximum(customers, 1))), np.inf)
        lo = np.clip(phat - rad, 0.0, 1.0)
        hi = np.clip(phat + rad, 0.0, 1.0)
        # monotone demand: D(a_k) <= D(a_j) for j < k
        hi = np.minimum.accumulate(hi)
        lo = np.maximum.accumulate(lo[::-1])[::-1]
        return lo, hi

    def eliminate(self, t: int) -> None:
        lo, hi = self.demand_bounds(t)
        a = self.grid.array
        lower = np.where(self.active, a * lo, -np.inf)
        leader = int(np.argmax(lower))
        drop = self.active & (a * hi < lower[leader])
        # drifting demand can cross the monotone bounds; the leader always survives
        drop[leader] = False
        for k in np.flatnonzero(drop):
            self.eliminated_at[int(k)] = t
        self.active &= ~drop

    def choose(self, t: int) -> int:
        self.eliminate(t)
        first = self.stats.first_unvisited(self.active)
        if first is not None:
            return first
        bonus = self.grid.array * np.sqrt(math.log(max(t, 1)) / np.maximum(self.stats.counts, 1))
        index = np.where(self.active, self.stats.means + bonus, -np.inf)
        return int(np.argmax(index))


def ts_step(alpha: np.ndarray, beta: np.ndarray, prices: np.ndarray, rng: np.random.Generator) -> int:
    theta = rng.beta(alpha, beta)
    return int(np.argmax(prices * theta))


class ThompsonSampling(Policy):
    """Beta posterior on each arm's purchase probability; plays the best sampled profit."""

    key = "ts"

    def __init__(self, grid: PriceGrid, rng=None):
        super().__init__(grid, rng)
        self.alpha = np.ones(grid.K)
        self.beta = np.ones(grid.K)

    def choose(self, t: int) -> int:
        return ts_step(self.alpha, self.beta, self.grid.array, self.rng)

    def observe(self, obs: Observation) -> None:
        self.alpha[obs.arm] += obs.demand
        self.beta[obs.arm] += self.grid.N - obs.demand
