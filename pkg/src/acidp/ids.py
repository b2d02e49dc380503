"""Finite information-directed sampling over a multiverse.

For each arm: expected regret against the belief-averaged per-universe optimum,
and the mutual information between the identity of the optimal arm and the
next demand count. Arms are chosen by minimizing squared regret over
information gain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PriceGrid
from .universes import MultiUniverse

G_TOL = 1e-12
DELTA_TOL = 1e-9


@dataclass
class IRVectors:
    delta: np.ndarray
    gain: np.ndarray
    optimal_prob: np.ndarray
    R_star: float
    best_arms: np.ndarray

    def to_dict(self) -> dict:
        return {
            "delta": self.delta.tolist(),
            "gain": self.gain.tolist(),
            "optimal_prob": self.optimal_prob.tolist(),
            "R_star": self.R_star,
            "best_arms": (self.best_arms + 1).tolist(),
        }


class Selection(NamedTuple):
    arm: int
    pi: np.ndarray
    ratio: float
    fallback: bool = False


def expected_profits(mu: MultiUniverse, grid: PriceGrid) -> np.ndarray:
    """(L, K) expected batch profit of each arm in each universe."""
    return mu.mean_demand * grid.array[None, :]


def optimal_partition(mu: MultiUniverse, grid: PriceGrid) -> tuple[np.ndarray, list[np.ndarray]]:
    """Best arm per universe (lowest index on ties) and the universes per best arm."""
    best = np.argmax(expected_profits(mu, grid), axis=1)
    cells = [np.flatnonzero(best == k) for k in range(grid.K)]
    return best, cells


def _xlogy_ratio(x: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos] / denom[pos])
    return out


def finite_ir(mu: MultiUniverse, grid: PriceGrid) -> IRVectors:
    profits = expected_profits(mu, grid)
    best = np.argmax(profits, axis=1)
    p = mu.p
    K = grid.K
    p_opt = np.bincount(best, weights=p, minlength=K)
    p_d = np.einsum("l,lkd->kd", p, mu.q)  # (K, N+1)

    groups = np.unique(best)
    member = (best[:, None] == groups[None, :]) * p[:, None]  # (L, G)
    joint = np.einsum("lg,lkd->gkd", member, mu.q)
    indep = p_opt[groups][:, None, None] * p_d[None, :, :]
    gain = _xlogy_ratio(joint, indep).sum(axis=(0, 2))

    R_star = float(p @ profits[np.arange(mu.L), best])
    delta = R_star - p @ profits
    return IRVectors(delta, gain, p_opt, R_star, best)


def info_gain_theta(mu: MultiUniverse, grid: PriceGrid | None = None) -> np.ndarray:
    """Mutual information between the universe identity and the next demand, per arm."""
    p_d = np.einsum("l,lkd->kd", mu.p, mu.q)
    joint = mu.p[:, None, None] * mu.q
    return _xlogy_ratio(joint, mu.p[:, None, None] * p_d[None]).sum(axis=(0, 2))


def information_ratios(delta: np.ndarray, gain: np.ndarray,
                       g_tol: float = G_TOL, d_tol: float = DELTA_TOL) -> np.ndarray:
    """Delta^2 / g, with 0 for known-optimal arms and inf for known-suboptimal ones."""
    delta = np.asarray(delta, dtype=float)
    gain = np.asarray(gain, dtype=float)
    out = np.empty_like(delta)
    informative = gain > g_tol
    out[informative] = delta[informative] ** 2 / gain[informative]
    out[~informative] = np.where(delta[~informative] <= d_tol, 0.0, np.inf)
    return out


def select_deterministic(ir: IRVectors, g_tol: float = G_TOL, d_tol: float = DELTA_TOL) -> Selection:
    scores = information_ratios(ir.delta, ir.gain, g_tol, d_tol)
    K = scores.size
    if np.all(np.isinf(scores)):
        k = int(np.argmin(ir.delta))
        return Selection(k, np.eye(K)[k], np.inf, True)
    k = int(np.argmin(scores))
    return Selection(k, np.eye(K)[k], float(scores[k]))


def _pair_ratio(q, d_i, d_j, g_i, g_j, d_tol):
    num = q * d_i + (1 - q) * d_j
    den = q * g_i + (1 - q) * g_j
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num ** 2 / den
    return np.where(den > G_TOL, r, np.where(num <= d_tol, 0.0, np.inf))


def optimize_pairs(delta: np.ndarray, gain: np.ndarray, d_tol: float = DELTA_TOL):
    """Best two-arm mixture: returns (i, j, weight on i, ratio)."""
    K = delta.size
    i, j = np.triu_indices(K, k=1)
    d_i, d_j, g_i, g_j = delta[i], delta[j], gain[i], gain[j]
    A, B = d_i - d_j, g_i - g_j
    cands = [np.zeros_like(A), np.ones_like(A)]
    with np.errstate(divide="ignore", invalid="ignore"):
        cands.append(np.where(A != 0, -d_j / A, 0.0))
        cands.append(np.where((A != 0) & (B != 0), (B * d_j - 2 * A * g_j) / (A * B), 0.0))
    qs = np.clip(np.stack(cands), 0.0, 1.0)
    qs = np.nan_to_num(qs, nan=0.0)
    ratios = _pair_ratio(qs, d_i, d_j, g_i, g_j, d_tol)
    best_c = np.argmin(ratios, axis=0)
    cols = np.arange(i.size)
    pair_ratio = ratios[best_c, cols]
    b = int(np.argmin(pair_ratio))
    return int(i[b]), int(j[b]), float(qs[best_c[b], b]), float(pair_ratio[b])


def select_randomized(ir: IRVectors, rng: np.random.Generator,
                      g_tol: float = G_TOL, d_tol: float = DELTA_TOL) -> Selection:
    """Sample from the information-ratio-minimizing distribution (support <= 2 arms)."""
    delta = np.maximum(np.asarray(ir.delta, dtype=float), 0.0)
    gain = np.maximum(np.asarray(ir.gain, dtype=float), 0.0)
    K = delta.size
    single = select_deterministic(ir, g_tol, d_tol)
    if K < 2:
        return single
    i, j, w, ratio = optimize_pairs(delta, gain, d_tol)
    if single.fallback and np.isinf(ratio):
        return single
    if ratio >= single.ratio - 1e-12:
        return single
    pi = np.zeros(K)
    pi[i], pi[j] = w, 1.0 - w
    arm = i if rng.random() < w else j
    return Selection(arm, pi, ratio)
