"""Policies with access to the true environment, used as regret references."""

from __future__ import annotations

from ..core import Observation, Policy, PriceGrid
from ..environments import Environment


class Clairvoyant(Policy):
    """Plays the round's expected-profit maximizer."""

    key = "oracle"

    def __init__(self, grid: PriceGrid, env: Environment, rng=None):
        super().__init__(grid, rng)
        self.env = env

    def choose(self, t: int) -> int:
        return self.env.oracle_profit(t, self.grid)[0]

    def observe(self, obs: Observation) -> None:
        pass


class FixedArm(Policy):
    key = "fixed"

    def __init__(self, grid: PriceGrid, arm: int, rng=None):
        super().__init__(grid, rng)
        self.arm = int(arm)

    def choose(self, t: int) -> int:
        return self.arm

    def observe(self, obs: Observation) -> None:
        pass
