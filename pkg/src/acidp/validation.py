"""Quick self-checks behind ``acidp validate``.

Each check compares a library routine against a slow, obviously-correct
reimplementation on seeded random fixtures and returns (name, passed, detail).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .audit import binomial_pvalue, window_variant_update
from .core import Observation, make_price_grid
from .environments import build_case_environment
from .ids import finite_ir, info_gain_theta
from .universes import (MultiUniverse, Universe, binomial_universe, generator, isotonic_clamp,
                        posterior_predictive_demand)

Check = tuple[str, bool, str]


def random_multiverse(rng: np.random.Generator, L: int, K: int, N: int) -> MultiUniverse:
    q = rng.dirichlet(np.ones(N + 1), size=(L, K))
    p = rng.dirichlet(np.ones(L))
    return MultiUniverse([Universe(q[i]) for i in range(L)], p, belief_floor=0.0)


def brute_force_ir(p, q, prices):
    """Delta, gain, p(a*), R* by explicit loops over universes, arms and outcomes."""
    L, K, D = q.shape
    profit = [[sum(q[l][k][d] * prices[k] * d for d in range(D)) for k in range(K)] for l in range(L)]
    best = [max(range(K), key=lambda k: (profit[l][k], -k)) for l in range(L)]
    p_opt = [sum(p[l] for l in range(L) if best[l] == a) for a in range(K)]
    R = sum(p[l] * profit[l][best[l]] for l in range(L))
    delta = [R - sum(p[l] * profit[l][k] for l in range(L)) for k in range(K)]
    gain = []
    for k in range(K):
        g = 0.0
        for d in range(D):
            pd = sum(p[l] * q[l][k][d] for l in range(L))
            for a in range(K):
                joint = sum(p[l] * q[l][k][d] for l in range(L) if best[l] == a)
                if joint > 0:
                    g += joint * math.log(joint / (p_opt[a] * pd))
        gain.append(g)
    return delta, gain, p_opt, R


def brute_force_pvalue(d: int, N: int, p0: float) -> float:
    pmf = [math.comb(N, j) * p0 ** j * (1 - p0) ** (N - j) for j in range(N + 1)]
    return min(1.0, sum(x for x in pmf if x <= pmf[d] * (1 + 1e-12)))


def check_finite_ir(n: int = 200, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        L, K, N = (int(x) for x in rng.integers(1, [5, 5, 4], endpoint=True))
        K = max(K, 2)
        grid = make_price_grid(0.1, 1.0, K, N)
        mu = random_multiverse(rng, L, K, N)
        ir = finite_ir(mu, grid)
        delta, gain, p_opt, R = brute_force_ir(mu.p, mu.q, grid.prices)
        worst = max(worst, np.max(np.abs(ir.delta - delta)), np.max(np.abs(ir.gain - gain)),
                    np.max(np.abs(ir.optimal_prob - p_opt)), abs(ir.R_star - R))
    return "finite_ir matches enumeration", bool(worst <= 1e-12), f"max abs error {worst:.2e}"


def check_pvalue() -> Check:
    worst = 0.0
    for N in (1, 2, 5, 10, 30):
        for p0 in (0.0, 0.01, 0.25, 0.5, 0.73, 1.0):
            for d in range(N + 1):
                worst = max(worst, abs(binomial_pvalue(d, N, p0) - brute_force_pvalue(d, N, p0)))
    return "binomial p-value matches enumeration", worst <= 1e-12, f"max abs error {worst:.2e}"


def check_data_processing(n: int = 200, seed: int = 1) -> Check:
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n):
        L, K, N = int(rng.integers(1, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
        grid = make_price_grid(0.1, 1.0, K, N)
        mu = random_multiverse(rng, L, K, N)
        worst = min(worst, float(np.min(info_gain_theta(mu) - finite_ir(mu, grid).gain)))
    return "I(theta;d) >= I(a*;d)", worst >= -1e-12, f"min margin {worst:.2e}"


def check_posterior_hygiene(rounds: int = 300, seed: int = 2) -> Check:
    from .policies import make_policy

    grid = make_price_grid(0.01, 1.0, 20, 10)
    env = build_case_environment(6, seed, horizon=rounds)
    policy = make_policy("acidp", grid, np.random.default_rng(seed), n_init=1)
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for t in range(1, rounds + 1):
        arm = policy.choose(t)
        policy.observe(Observation(t, arm, env.sample_batch(t, grid.prices[arm], rng)))
        mu = policy.mu
        if mu.L == 0:  # still in the exploration rounds
            continue
        worst = max(worst, abs(mu.p.sum() - 1.0), float(np.max(np.abs(mu.q.sum(axis=2) - 1.0))))
        if np.any(mu.q < 0):
            return "posterior hygiene", False, f"negative likelihood at round {t}"
    return "posterior hygiene", worst <= 1e-9, f"max deviation {worst:.2e}"


def check_window_and_generator(seed: int = 3) -> Check:
    rng = np.random.default_rng(seed)
    grid = make_price_grid(0.1, 1.0, 10, 8)
    D = np.sort(rng.uniform(size=grid.K))[::-1]
    mu = MultiUniverse([binomial_universe(D, grid.N)])
    cf = generator(mu, [0.0], grid, 0.0)[0]
    gen_err = float(np.max(np.abs(cf.demand - isotonic_clamp(posterior_predictive_demand(mu)))))
    window = [Observation(t, int(rng.integers(grid.K)), int(rng.integers(grid.N + 1)))
              for t in range(1, 60)]
    u = window_variant_update(mu, window, grid)
    rows_ok = bool(np.allclose(u.likelihood.sum(axis=1), 1.0) and np.all(u.likelihood >= 0))
    mono = bool(np.all(np.diff(u.demand) <= 1e-12))
    ok = gen_err <= 1e-6 and rows_ok and mono
    return "window rows and generator identity", ok, f"generator error {gen_err:.2e}"


def check_determinism(seed: int = 4) -> Check:
    from .harness import ExperimentConfig, PolicySpec, _run_one

    cfg = ExperimentConfig([PolicySpec("acidp")], case=2, horizon=300, trials=1, base_seed=seed)
    a, _ = _run_one(cfg, cfg.policies[0], 0)
    b, _ = _run_one(cfg, cfg.policies[0], 0)
    same = a.arms == b.arms and a.demands == b.demands and a.oracle_profits == b.oracle_profits
    return "trial replay is bitwise identical", same, ""


CHECKS: list[Callable[[], Check]] = [
    check_finite_ir, check_pvalue, check_data_processing, check_posterior_hygiene,
    check_window_and_generator, check_determinism,
]


def run_all() -> list[Check]:
    return [check() for check in CHECKS]
