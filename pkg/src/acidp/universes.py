"""Finite set of candidate market models ("universes") and the belief over them.

Each universe is a K x (N+1) table: row k is the demand-count pmf when price k
is offered. Universes come from fresh exploration samples (perceived), stored
history (vintage), synthetic shifts of the current demand estimate
(counterfactual) or a rolling-window refit (window).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.special import ndtr
from scipy.stats import binom

from .core import PriceGrid

TAGS = ("perceived", "vintage", "counterfactual", "window")
LIKELIHOOD_FLOOR = 1e-6
BELIEF_FLOOR = 1e-4
FILE_FORMAT = "acidp-universes"
FILE_VERSION = 1

_ids = itertools.count(1)


class UniverseFileError(ValueError):
    pass


def binomial_rows(N: int, probs) -> np.ndarray:
    """(K, N+1) Binomial(N, p_k) pmfs.

    Probabilities within 1e-12 of 0 or 1 are snapped to the boundary; scipy's
    pmf overflows on subnormal inputs.
    """
    probs = np.clip(np.atleast_1d(np.asarray(probs, dtype=float)), 0.0, 1.0)
    probs = np.where(probs < 1e-12, 0.0, np.where(probs > 1.0 - 1e-12, 1.0, probs))
    return binom.pmf(np.arange(N + 1)[None, :], N, probs[:, None])


def smooth_rows(q: np.ndarray, eps: float = LIKELIHOOD_FLOOR) -> np.ndarray:
    """Replace cells below ``eps`` by ``eps`` and renormalize each row."""
    q = np.maximum(np.asarray(q, dtype=float), eps)
    return q / q.sum(axis=-1, keepdims=True)


@dataclass
class Universe:
    likelihood: np.ndarray
    tag: str = "perceived"
    id: int = 0
    # purchase probability per arm that generated the rows, when known
    demand: np.ndarray | None = None

    def __post_init__(self):
        self.likelihood = np.asarray(self.likelihood, dtype=float)
        if self.likelihood.ndim != 2:
            raise ValueError("likelihood must be K x (N+1)")
        if self.tag not in TAGS:
            raise ValueError(f"unknown universe tag {self.tag!r}")
        if not self.id:
            self.id = next(_ids)

    @property
    def K(self) -> int:
        return self.likelihood.shape[0]

    @property
    def N(self) -> int:
        return self.likelihood.shape[1] - 1

    def mean_demand(self) -> np.ndarray:
        """Expected demand count per arm."""
        return self.likelihood @ np.arange(self.N + 1)


def apply_belief_floor(p: np.ndarray, floor: float) -> np.ndarray:
    """Normalize ``p`` so it sums to 1 with every entry >= ``floor``.

    Floored entries are pinned at exactly ``floor`` and the rest rescaled to fill
    the remaining mass, repeating until no further entry drops below it.
    """
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    if floor <= 0 or p.size == 1:
        return p
    pinned = np.zeros(p.size, dtype=bool)
    for _ in range(p.size):
        newly = (p < floor) & ~pinned
        if not newly.any():
            break
        pinned |= newly
        free = ~pinned
        p = p.copy()
        p[pinned] = floor
        p[free] *= (1.0 - floor * pinned.sum()) / p[free].sum()
    return p


class MultiUniverse:
    """Universes stacked into an (L, K, N+1) array with a belief vector.

    Single-owner mutable: the operations below update in place and return self.
    """

    def __init__(self, universes: Sequence[Universe] = (), belief=None,
                 belief_floor: float = BELIEF_FLOOR):
        self.belief_floor = float(belief_floor)
        self.q = np.zeros((0, 0, 0))
        self.tags: list[str] = []
        self.ids: list[int] = []
        self.demands: list[np.ndarray | None] = []
        self.p = np.zeros(0)
        self._mean = np.zeros((0, 0))
        if universes:
            w = np.ones(len(universes)) if belief is None else np.asarray(belief, dtype=float)
            self._append(list(universes), w)
            self.p = self._normalized(self.p)

    # -- bookkeeping -------------------------------------------------------
    def __len__(self) -> int:
        return len(self.tags)

    @property
    def L(self) -> int:
        return len(self.tags)

    @property
    def K(self) -> int:
        return self.q.shape[1]

    @property
    def N(self) -> int:
        return self.q.shape[2] - 1

    @property
    def floor(self) -> float:
        return self.belief_floor / self.L if self.L else 0.0

    @property
    def mean_demand(self) -> np.ndarray:
        """(L, K) expected demand counts."""
        return self._mean

    @property
    def universes(self) -> list[Universe]:
        return [Universe(self.q[i], self.tags[i], self.ids[i], self.demands[i])
                for i in range(self.L)]

    def copy(self) -> "MultiUniverse":
        mu = MultiUniverse(belief_floor=self.belief_floor)
        mu.q, mu.p, mu._mean = self.q.copy(), self.p.copy(), self._mean.copy()
        mu.tags, mu.ids, mu.demands = list(self.tags), list(self.ids), list(self.demands)
        return mu

    def _normalized(self, p: np.ndarray) -> np.ndarray:
        return apply_belief_floor(p, self.belief_floor / p.size)

    def _append(self, new: list[Universe], weights: np.ndarray) -> None:
        stack = np.stack([u.likelihood for u in new])
        if self.L and stack.shape[1:] != self.q.shape[1:]:
            raise ValueError(f"universe shape {stack.shape[1:]} != {self.q.shape[1:]}")
        self.q = stack if not self.L else np.concatenate([self.q, stack])
        self.tags += [u.tag for u in new]
        self.ids += [u.id for u in new]
        self.demands += [u.demand for u in new]
        self.p = np.concatenate([self.p, weights])
        self._mean = self.q @ np.arange(self.q.shape[2])

    def replace(self, i: int, universe: Universe) -> "MultiUniverse":
        """Swap the likelihood of universe ``i`` keeping its id and belief."""
        self.q[i] = universe.likelihood
        self._mean[i] = universe.mean_demand()
        self.tags[i] = universe.tag
        self.demands[i] = universe.demand
        return self

    def remove(self, keep: np.ndarray) -> "MultiUniverse":
        keep = np.asarray(keep, dtype=bool)
        self.q, self._mean = self.q[keep], self._mean[keep]
        idx = np.flatnonzero(keep)
        self.tags = [self.tags[i] for i in idx]
        self.ids = [self.ids[i] for i in idx]
        self.demands = [self.demands[i] for i in idx]
        self.p = self._normalized(self.p[keep])
        return self

    def prune(self, max_universes: int) -> "MultiUniverse":
        """Drop the lowest-belief universes beyond ``max_universes`` (newest win ties)."""
        if self.L <= max_universes:
            return self
        order = np.lexsort((-np.arange(self.L), -self.p))
        keep = np.zeros(self.L, dtype=bool)
        keep[order[:max_universes]] = True
        return self.remove(keep)


# ---------------------------------------------------------------------------
# perceived universes


def empirical_likelihood(samples: Sequence[Sequence[int]], N: int,
                         eps: float = LIKELIHOOD_FLOOR) -> np.ndarray:
    """Row k is the smoothed empirical pmf of the demand counts seen at arm k."""
    rows = np.zeros((len(samples), N + 1))
    for k, ds in enumerate(samples):
        ds = np.asarray(ds, dtype=int)
        if ds.size == 0:
            raise ValueError(f"arm {k + 1} has no samples")
        if ds.min() < 0 or ds.max() > N:
            raise ValueError(f"arm {k + 1} has demand outside [0, {N}]")
        rows[k] = np.bincount(ds, minlength=N + 1) / ds.size
    return smooth_rows(rows, eps)


def initiator_schedule(L_P: int, n: int, K: int) -> list[int]:
    """Arm order for the exploration rounds: arms inner, repetitions outer."""
    if L_P < 1 or n < 1:
        raise ValueError("need L_P >= 1 and n >= 1")
    return list(range(K)) * (L_P * n)


def perceived_from_log(log: Sequence[tuple[int, int]], L_P: int, n: int, K: int, N: int,
                       eps: float = LIKELIHOOD_FLOOR) -> list[Universe]:
    """Build ``L_P`` perceived universes from the (arm, demand) log of the schedule."""
    per = n * K
    if len(log) != L_P * per:
        raise ValueError(f"expected {L_P * per} exploration rounds, got {len(log)}")
    out = []
    for i in range(L_P):
        samples: list[list[int]] = [[] for _ in range(K)]
        for arm, d in log[i * per:(i + 1) * per]:
            samples[arm].append(d)
        out.append(Universe(empirical_likelihood(samples, N, eps), "perceived"))
    return out


def initiator(L_P: int, n: int, K: int, N: int, sampler: Callable[[int], int],
              eps: float = LIKELIHOOD_FLOOR) -> tuple[list[Universe], list[tuple[int, int]]]:
    """Explore every arm ``n`` times per universe; returns universes and the sample log."""
    log = [(arm, int(sampler(arm))) for arm in initiator_schedule(L_P, n, K)]
    return perceived_from_log(log, L_P, n, K, N, eps), log


# ---------------------------------------------------------------------------
# counterfactual universes


def posterior_predictive_demand(mu: MultiUniverse, grid: PriceGrid | None = None) -> np.ndarray:
    """Belief-weighted expected demand fraction per arm."""
    return (mu.p @ mu.mean_demand) / mu.N


def isotonic_clamp(D: np.ndarray) -> np.ndarray:
    """Closest non-increasing sequence in least squares, clipped to [0, 1]."""
    fit = isotonic_regression(np.asarray(D, dtype=float), increasing=False).x
    return np.clip(fit, 0.0, 1.0)


def valuation_from_demand(D: np.ndarray, grid: PriceGrid, clamp: bool = True
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Discrete valuation pmf implied by a demand curve.

    Mass D(a_k) - D(a_k+1) sits at the midpoint of each price interval; the
    mass below the first price and above the last sits half a spacing outside
    the grid.
    """
    a = grid.array
    D = isotonic_clamp(D) if clamp else np.asarray(D, dtype=float)
    mids = (a[:-1] + a[1:]) / 2
    support = np.concatenate([[a[0] - (a[1] - a[0]) / 2], mids, [a[-1] + (a[-1] - a[-2]) / 2]])
    mass = np.concatenate([[1.0 - D[0]], D[:-1] - D[1:], [D[-1]]])
    return support, mass


def default_shifts(grid: PriceGrid, count: int = 9, span: float = 0.3) -> np.ndarray:
    top = grid.prices[-1]
    return np.linspace(-span * top, span * top, count)


def default_noise_std(grid: PriceGrid, paper_literal: bool = False) -> float:
    a = grid.array
    if paper_literal:
        return float(((a[:-1] + a[1:]) / 2).max())
    return float(np.min(np.diff(a)) / 2)


def generator(mu: MultiUniverse, shifts, grid: PriceGrid, noise_std: float,
              mode: str = "exact", n_mc: int = 100, rng: np.random.Generator | None = None,
              eps: float = LIKELIHOOD_FLOOR) -> list[Universe]:
    """Counterfactual universes: shift the implied valuation pmf by each c, blur it
    with Normal noise and derive per-arm demand-count likelihoods.

    ``mode="exact"`` uses Binomial(N, P(v >= a)) rows; ``mode="mc"`` simulates
    ``n_mc`` batches of N valuations and takes the empirical pmf of the counts.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    if shifts.size == 0:
        return []
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown generator mode {mode!r}")
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    a, N = grid.array, grid.N
    support, mass = valuation_from_demand(posterior_predictive_demand(mu), grid)
    out = []
    for c in shifts:
        if mode == "exact":
            buy = _purchase_probability(support + c, mass, a, noise_std)
            q = binomial_rows(N, buy)
        else:
            rng = rng if rng is not None else np.random.default_rng()
            v = rng.choice(support + c, size=(n_mc, N), p=mass / mass.sum())
            if noise_std > 0:
                v = v + rng.normal(0.0, noise_std, size=v.shape)
            counts = (v[:, :, None] >= a[None, None, :]).sum(axis=1)  # (n_mc, K)
            q = np.stack([np.bincount(counts[:, k], minlength=N + 1) for k in range(a.size)]) / n_mc
            buy = counts.mean(axis=0) / N
        out.append(Universe(smooth_rows(q, eps), "counterfactual", demand=np.asarray(buy)))
    return out


def _purchase_probability(support: np.ndarray, mass: np.ndarray, prices: np.ndarray,
                          noise_std: float) -> np.ndarray:
    """P(V + xi >= a) for discrete V and xi ~ Normal(0, noise_std)."""
    diff = support[None, :] - prices[:, None]
    if noise_std <= 0:
        return np.clip((diff >= -1e-12) @ mass, 0.0, 1.0)
    return np.clip(ndtr(diff / noise_std) @ mass, 0.0, 1.0)


def binomial_universe(demand: np.ndarray, N: int, tag: str = "counterfactual",
                      eps: float = LIKELIHOOD_FLOOR) -> Universe:
    demand = np.clip(np.asarray(demand, dtype=float), 0.0, 1.0)
    q = binomial_rows(N, demand)
    return Universe(smooth_rows(q, eps), tag, demand=demand)


# ---------------------------------------------------------------------------
# belief maintenance


def bayes_update(mu: MultiUniverse, arm: int, demand: int) -> MultiUniverse:
    """Posterior belief after observing ``demand`` at 0-based ``arm`` (in place)."""
    if not 0 <= demand <= mu.N:
        raise ValueError(f"demand {demand} outside [0, {mu.N}]")
    mu.p = mu._normalized(mu.p * mu.q[:, arm, demand])
    return mu


def inject_universes(mu: MultiUniverse, new: Sequence[Universe], weight_mode: str = "yellow",
                     paper_literal: bool = False) -> MultiUniverse:
    """Add universes with pre-normalization weights, then renormalize (in place).

    yellow: the new universes together weigh as much as the current top belief,
    split evenly, so a batch is competitive without swamping a converged belief
    (``paper_literal``: weight 1 each).
    red: each new universe weighs L times the mean existing belief, L counted
    after injection (``paper_literal``: weight L).
    """
    new = list(new)
    if not new:
        return mu
    if not mu.L:
        mu._append(new, np.ones(len(new)))
        mu.p = mu._normalized(mu.p)
        return mu
    total = mu.L + len(new)
    if weight_mode == "yellow":
        w = 1.0 if paper_literal else float(mu.p.max()) / len(new)
    elif weight_mode == "red":
        w = float(total) if paper_literal else total * float(mu.p.mean())
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    mu._append(new, np.full(len(new), w))
    mu.p = mu._normalized(mu.p)
    return mu


# ---------------------------------------------------------------------------
# persistence


def save_universes(mu: MultiUniverse, path: str | Path) -> None:
    doc = {
        "format": FILE_FORMAT,
        "version": FILE_VERSION,
        "K": mu.K,
        "N": mu.N,
        "universes": [
            {"id": mu.ids[i], "tag": mu.tags[i], "belief": float(mu.p[i]),
             "rows": mu.q[i].tolist()}
            for i in range(mu.L)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_universes(path: str | Path, tol: float = 1e-9) -> MultiUniverse:
    """Load a universe file; validation errors name the offending universe/row/column."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UniverseFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != FILE_FORMAT:
        raise UniverseFileError(f"{path}: not a universe file")
    if doc.get("version") != FILE_VERSION:
        raise UniverseFileError(f"{path}: unsupported version {doc.get('version')!r}")
    K, N = doc.get("K"), doc.get("N")
    if not isinstance(K, int) or not isinstance(N, int) or K < 1 or N < 1:
        raise UniverseFileError(f"{path}: invalid K/N")
    universes, beliefs = [], []
    for i, entry in enumerate(doc.get("universes", [])):
        where = f"{path}: universe {i}"
        try:
            rows = np.asarray(entry["rows"], dtype=float)
        except (KeyError, ValueError, TypeError) as exc:
            raise UniverseFileError(f"{where}: bad rows ({exc})") from None
        if rows.shape != (K, N + 1):
            raise UniverseFileError(f"{where}: rows shape {rows.shape}, expected {(K, N + 1)}")
        bad = np.argwhere(~np.isfinite(rows) | (rows < 0))
        if bad.size:
            r, c = bad[0]
            raise UniverseFileError(f"{where}: row {r} column {c}: invalid probability {rows[r, c]}")
        sums = rows.sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if off.size:
            raise UniverseFileError(f"{where}: row {off[0]} not normalized (sum {sums[off[0]]})")
        tag = entry.get("tag", "vintage")
        if tag not in TAGS:
            raise UniverseFileError(f"{where}: unknown tag {tag!r}")
        universes.append(Universe(rows, tag, int(entry.get("id", 0)) or 0))
        beliefs.append(float(entry.get("belief", 1.0)))
    if not universes:
        raise UniverseFileError(f"{path}: no universes")
    mu = MultiUniverse()
    p = np.asarray(beliefs)
    mu._append(universes, p if abs(p.sum() - 1.0) <= 1e-9 else p / p.sum())
    return mu


def load_vintage(path: str | Path) -> MultiUniverse:
    """Load stored universes, retagged as vintage."""
    mu = load_universes(path)
    mu.tags = ["vintage"] * mu.L
    return mu
