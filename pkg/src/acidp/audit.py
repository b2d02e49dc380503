"""Transferability auditing.

Yellow card: a rolling-window confidence-sequence test comparing the latest
demands at the played price with the older ones. Red card: Bonferroni-corrected
exact binomial tests of audit samples against the multiverse's predictive
demand. Also the window-variant universe refit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Observation, PriceGrid
from .universes import (LIKELIHOOD_FLOOR, MultiUniverse, Universe, binomial_rows,
                        posterior_predictive_demand, smooth_rows)

PVALUE_SLACK = 1e-12


@dataclass
class AuditState:
    """Mutable audit bookkeeping owned by one policy instance."""

    w: int = 300
    n_recent: int = 5
    alpha1: float = 0.05
    alpha2: float = 0.01
    epsilon_init: float = 0.1
    r_decay: float = 0.1
    auditor_count: int = 5
    paper_literal_time: bool = False
    window: deque = field(default_factory=deque)
    alert: str = "none"
    epsilon: float = -1.0
    audit_queue: deque = field(default_factory=deque)
    audit_samples: list = field(default_factory=list)
    last_test: dict | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            self.epsilon = self.epsilon_init
        self.window = deque(self.window, maxlen=self.w)

    def reset(self) -> None:
        self.window.clear()
        self.audit_queue.clear()
        self.audit_samples.clear()
        self.alert = "none"
        self.epsilon = self.epsilon_init

    def decay(self) -> None:
        self.epsilon *= self.r_decay

    def reset_epsilon(self) -> None:
        self.epsilon = self.epsilon_init


def sequence_statistic(demands: Sequence[int], n_recent: int, N: int) -> tuple[float, int] | None:
    """Deviation of the older demands from the mean of the latest ``n_recent``.

    ``demands`` are in time order. Returns (X, m), or None when there are not
    more than ``n_recent`` of them.
    """
    d = np.asarray(demands, dtype=float)
    m = d.size
    if m <= n_recent:
        return None
    recent_mean = d[m - n_recent:].mean()
    X = float(np.sum(d[:m - n_recent] - recent_mean) / (N / 2))
    return X, m


def confidence_radius(tau: float, alpha1: float) -> float:
    return 1.7 * math.sqrt((math.log(math.log(2 * tau)) + 0.72 * math.log(10.4 / alpha1)) / tau)


def confidence_bounds(X: float, m: int, n_recent: int, t: int, alpha1: float,
                      paper_literal_time: bool = False) -> tuple[float, float] | None:
    """(LB, UB) around X / (m - n_recent); None when the time variable is below 2."""
    k = m - n_recent
    if k < 1:
        return None
    tau = t if paper_literal_time else k
    if tau < 2:
        return None
    center = X / k
    r = confidence_radius(tau, alpha1)
    return center - r, center + r


def yellow_card_check(audit: AuditState, obs: Observation, N: int) -> str:
    """Append ``obs`` to the window and test the demands at its arm."""
    audit.window.append(obs)
    audit.last_test = None
    at_arm = [o.demand for o in audit.window if o.arm == obs.arm]
    stat = sequence_statistic(at_arm, audit.n_recent, N)
    if stat is None:
        return "none"
    X, m = stat
    bounds = confidence_bounds(X, m, audit.n_recent, obs.t, audit.alpha1, audit.paper_literal_time)
    if bounds is None:
        return "none"
    lb, ub = bounds
    audit.last_test = {"t": obs.t, "arm": obs.arm + 1, "X": X, "m": m, "LB": lb, "UB": ub}
    return "yellow" if lb > 0 or ub < 0 else "none"


def auditor_schedule(K: int, count: int = 5) -> list[int]:
    """Evenly spaced 0-based arms from the first to the last, deduplicated."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return [0]
    arms = {math.floor(1 + (j - 1) * (K - 1) / (count - 1)) - 1 for j in range(1, count + 1)}
    return sorted(arms)


def binomial_pvalue(d: int, N: int, p0: float) -> float:
    """Exact two-sided p-value: total Binomial(N, p0) mass of outcomes no likelier than d."""
    pmf = binomial_rows(N, p0)[0]
    return float(min(1.0, pmf[pmf <= pmf[d] * (1 + PVALUE_SLACK)].sum()))


def red_card_check(samples: Sequence[tuple[int, int]], mu: MultiUniverse, alpha2: float,
                   return_pvalues: bool = False):
    """'red' when any audit sample rejects the predictive demand at level alpha2 / n."""
    if not samples:
        return ("none", []) if return_pvalues else "none"
    D = posterior_predictive_demand(mu)
    pvals = [binomial_pvalue(d, mu.N, float(np.clip(D[arm], 0.0, 1.0))) for arm, d in samples]
    alert = "red" if min(pvals) < alpha2 / len(samples) else "none"
    return (alert, pvals) if return_pvalues else alert


def monotone_repair(D: np.ndarray, upward: bool) -> np.ndarray:
    """Force a non-increasing demand curve.

    upward: a price inherits the demand of any higher price above it (running max
    from the top price down); otherwise a price is capped by the demand of
    lower prices (running min from the bottom up).
    """
    D = np.asarray(D, dtype=float)
    if upward:
        return np.maximum.accumulate(D[::-1])[::-1]
    return np.minimum.accumulate(D)


def window_variant_update(mu: MultiUniverse, window: Sequence[Observation], grid: PriceGrid,
                          N: int | None = None, eps: float = LIKELIHOOD_FLOOR) -> Universe:
    """Refit one universe from the belief mixture overwritten by windowed samples."""
    N = mu.N if N is None else N
    q = np.einsum("l,lkd->kd", mu.p, mu.q)
    by_arm: dict[int, list[int]] = {}
    for o in window:
        by_arm.setdefault(o.arm, []).append(o.demand)
    for arm, ds in by_arm.items():
        q[arm] = np.bincount(ds, minlength=N + 1)[: N + 1] / len(ds)
    Dw = q @ np.arange(N + 1) / N
    if window:
        latest = window[-1]
        predicted = posterior_predictive_demand(mu)[latest.arm] * N
        Dw = monotone_repair(Dw, upward=latest.demand > predicted)
    else:
        Dw = monotone_repair(Dw, upward=False)
    Dw = np.clip(Dw, 0.0, 1.0)
    rows = binomial_rows(N, Dw)
    return Universe(smooth_rows(rows, eps), "window", demand=Dw)
