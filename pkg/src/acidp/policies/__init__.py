"""Policy registry: every policy is constructed as ``make_policy(key, grid, rng, **params)``."""

from __future__ import annotations

from ..core import ConfigError, Policy, PriceGrid
from .acidp import ACIDP, AcidpConfig
from .baselines import UCB, UCBPI, ArmStats, EpsilonGreedy, ThompsonSampling, UCBTuned
from .reference import Clairvoyant, FixedArm

_ACIDP_VARIANTS = {
    "acidp": "standard",
    "acidp-theta": "theta",
    "acidp-window": "window",
    "acidp-noaudit": "no_audit",
}

_BASELINES = {
    "eg": EpsilonGreedy,
    "ucb": UCB,
    "ucb-tuned": UCBTuned,
    "ucbpi": UCBPI,
    "ts": ThompsonSampling,
}

POLICY_KEYS = tuple(_ACIDP_VARIANTS) + tuple(_BASELINES)


def make_policy(key: str, grid: PriceGrid, rng=None, **params) -> Policy:
    if key in _ACIDP_VARIANTS:
        params.setdefault("variant", _ACIDP_VARIANTS[key])
        policy = ACIDP(grid, rng, **params)
        policy.key = key
        return policy
    if key in _BASELINES:
        try:
            return _BASELINES[key](grid, rng, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {key}: {exc}") from None
    raise ConfigError(f"unknown policy {key!r}; choose from {', '.join(POLICY_KEYS)}")


__all__ = [
    "ACIDP", "AcidpConfig", "ArmStats", "Clairvoyant", "EpsilonGreedy", "FixedArm",
    "POLICY_KEYS", "ThompsonSampling", "UCB", "UCBPI", "UCBTuned", "make_policy",
]
