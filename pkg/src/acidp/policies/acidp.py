"""Actor-critic information-directed pricing.

Round structure:

1. Exploration rounds queued by the initiator (at start and after a red card)
   are played first; their samples become perceived universes.
2. Otherwise the arm minimizing the information ratio is chosen. A pending
   yellow card injects counterfactual universes and, once the auditor has been
   activated by a converged belief, hands the next rounds to the
   epsilon-auditor with probability epsilon. With ``auditor_standby`` the
   yellow state instead persists until the next red card.
3. The observation runs through the transferability test and updates the
   belief. A failed audit raises a red card: one exploration pass over the
   grid builds a fresh perceived universe, and counterfactuals are generated
   from the refreshed belief.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from ..audit import (AuditState, auditor_schedule, binomial_pvalue, window_variant_update,
                     yellow_card_check)
from ..core import ConfigError, Observation, Policy, PriceGrid
from ..ids import expected_profits, finite_ir, info_gain_theta, select_deterministic, select_randomized
from ..universes import (BELIEF_FLOOR, LIKELIHOOD_FLOOR, MultiUniverse, bayes_update,
                         default_noise_std, default_shifts, generator, inject_universes,
                         initiator_schedule, load_vintage, perceived_from_log,
                         posterior_predictive_demand)

log = logging.getLogger(__name__)

VARIANTS = ("standard", "theta", "window", "no_audit")
SELECTORS = ("deterministic", "randomized")


@dataclass
class AcidpConfig:
    L_P: int = 2
    n_init: int = 1
    variant: str = "standard"
    selector: str = "deterministic"
    # counterfactual generator
    shift_count: int = 9
    shift_span: float = 0.3
    shifts: list[float] | None = None
    noise_std: float | None = None
    generator_mode: str = "exact"
    n_mc: int = 100
    # auditing
    w: int = 300
    n_recent: int = 5
    alpha1: float = 0.05
    alpha2: float = 0.01
    epsilon: float = 0.1
    r_decay: float = 0.1
    auditor_count: int = 5
    converge_belief: float = 0.9
    converge_rounds: int = 10
    auditor_standby: bool = False
    # after a red card: one pass over the arms (False replays the full initiator)
    single_pass_rebuild: bool = True
    regenerate_after_red: bool = True
    # multiverse
    likelihood_floor: float = LIKELIHOOD_FLOOR
    belief_floor: float = BELIEF_FLOOR
    max_universes: int = 30
    vintage: str | None = None
    perceived_prior_ratio: float = 2.0
    # literal readings of ambiguous rules
    paper_literal_time: bool = False
    paper_literal_noise: bool = False
    paper_literal_weights: bool = False
    verbose_audit: bool = False

    def __post_init__(self):
        if self.L_P < 1 or self.n_init < 1:
            raise ConfigError("ACIDP needs L_P >= 1 and n_init >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown ACIDP variant {self.variant!r}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"unknown selector {self.selector!r}")
        if self.max_universes < self.L_P:
            raise ConfigError("max_universes must be at least L_P")

    @classmethod
    def from_dict(cls, params: dict) -> "AcidpConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(params) - known
        if unknown:
            raise ConfigError(f"unknown ACIDP parameters: {sorted(unknown)}")
        return cls(**params)


class ACIDP(Policy):
    key = "acidp"

    def __init__(self, grid: PriceGrid, rng=None, config: AcidpConfig | None = None, **params):
        super().__init__(grid, rng)
        self.config = cfg = config if config is not None else AcidpConfig.from_dict(params)
        self.mu = MultiUniverse(belief_floor=cfg.belief_floor)
        if cfg.vintage:
            self._vintage = load_vintage(cfg.vintage)
            if (self._vintage.K, self._vintage.N) != (grid.K, grid.N):
                raise ConfigError("vintage universes do not match the price grid")
        else:
            self._vintage = None
        self.audit = AuditState(w=cfg.w, n_recent=cfg.n_recent, alpha1=cfg.alpha1,
                                alpha2=cfg.alpha2, epsilon_init=cfg.epsilon,
                                r_decay=cfg.r_decay, auditor_count=cfg.auditor_count,
                                paper_literal_time=cfg.paper_literal_time)
        self.shifts = (np.asarray(cfg.shifts, dtype=float) if cfg.shifts is not None
                       else default_shifts(grid, cfg.shift_count, cfg.shift_span))
        self.noise_std = (cfg.noise_std if cfg.noise_std is not None
                          else default_noise_std(grid, cfg.paper_literal_noise))
        self.audit_arms = auditor_schedule(grid.K, cfg.auditor_count)

        self._forced: deque[tuple[int, str]] = deque()
        self._purpose = "ids"
        self._init_log: list[tuple[int, int]] = []
        self._initialized = False
        self._converged_for = 0
        self._auditor_active = False
        self._alert = "none"
        self._last_alert = "none"
        self._window_idx: int | None = None
        self.audit_log: list[dict] = []
        self.events: list[tuple[int, str]] = []
        self._queue_initiator()

    # -- public state --------------------------------------------------------
    @property
    def alert(self) -> str:
        return self._last_alert

    def force_alert(self, alert: str) -> None:
        """Pretend the last transferability test raised ``alert`` (testing hook)."""
        if alert == "red":
            self._red_card(t=None)
            return
        self._fresh_yellow = alert == "yellow"
        self._standby = self._standby or alert == "yellow"
        self._alert = alert

    # -- round protocol ------------------------------------------------------
    def choose(self, t: int) -> int:
        if self._forced:
            arm, self._purpose = self._forced.popleft()
            return arm
        self._purpose = "ids"
        cfg = self.config
        if cfg.variant == "window":
            self._refresh_window_universe(t)
        arm = self._select()
        pending = self._standby if cfg.auditor_standby else self._alert == "yellow"
        if pending and cfg.variant in ("standard", "theta"):
            if self._fresh_yellow:
                self._inject_counterfactuals(t)
                self._fresh_yellow = False
            if self._auditor_active and self.rng.random() < self.audit.epsilon:
                self.audit.audit_samples.clear()
                self._forced.extend((a, "audit") for a in self.audit_arms)
                arm, self._purpose = self._forced.popleft()
                self.events.append((t, "audit"))
        return arm

    def observe(self, obs: Observation) -> None:
        if self._purpose == "init":
            self._observe_init(obs)
            return
        cfg = self.config
        alert = "none"
        if self._purpose == "audit":
            p0 = float(np.clip(posterior_predictive_demand(self.mu)[obs.arm], 0.0, 1.0))
            pval = binomial_pvalue(obs.demand, self.grid.N, p0)
            self.audit.audit_samples.append((obs.arm, obs.demand, pval))
            if cfg.verbose_audit:
                self.audit_log.append({"t": obs.t, "arm": obs.arm + 1, "kind": "audit",
                                       "demand": obs.demand, "p0": p0, "pvalue": pval})
        if cfg.variant in ("standard", "theta"):
            if yellow_card_check(self.audit, obs, self.grid.N) == "yellow":
                alert = "yellow"
            if cfg.verbose_audit and self.audit.last_test is not None:
                self.audit_log.append({**self.audit.last_test, "kind": "sequence",
                                       "alert": alert})
            if self._purpose == "audit" and not any(p == "audit" for _, p in self._forced):
                alert = self._finish_audit(obs.t) or alert
        elif cfg.variant == "window":
            self.audit.window.append(obs)

        if alert == "red":
            self._last_alert = "red"
            return
        if alert == "yellow" and self._alert != "yellow":
            self._standby = True
            self._fresh_yellow = True
            self.audit.reset_epsilon()
            self.events.append((obs.t, "yellow"))
        self._alert = alert
        self._last_alert = alert
        bayes_update(self.mu, obs.arm, obs.demand)
        if self.optimal_arm_belief().max() > cfg.converge_belief:
            self._converged_for += 1
            if self._converged_for >= cfg.converge_rounds:
                self._auditor_active = True
        else:
            self._converged_for = 0

    def optimal_arm_belief(self) -> np.ndarray:
        """Belief that each arm is optimal; near-duplicate universes pool their mass here."""
        best = np.argmax(expected_profits(self.mu, self.grid), axis=1)
        return np.bincount(best, weights=self.mu.p, minlength=self.grid.K)

    # -- internals -----------------------------------------------------------
    _fresh_yellow = False
    # set by the first yellow card and cleared only by a red card; while set the
    # epsilon-auditor may take over any round
    _standby = False

    def _select(self) -> int:
        ir = finite_ir(self.mu, self.grid)
        if self.config.variant == "theta":
            ir.gain = info_gain_theta(self.mu)
        if self.config.selector == "randomized":
            return select_randomized(ir, self.rng).arm
        return select_deterministic(ir).arm

    def _rebuild_shape(self) -> tuple[int, int]:
        """(L_P, n) of the running initiator pass."""
        cfg = self.config
        if self._initialized and cfg.single_pass_rebuild:
            return 1, 1
        return cfg.L_P, cfg.n_init

    def _queue_initiator(self) -> None:
        self._init_log = []
        L_P, n = self._rebuild_shape()
        self._forced.extend((a, "init") for a in initiator_schedule(L_P, n, self.grid.K))

    def _observe_init(self, obs: Observation) -> None:
        self._init_log.append((obs.arm, obs.demand))
        self.audit.window.append(obs)
        self._last_alert = "none"
        if any(p == "init" for _, p in self._forced):
            return
        cfg = self.config
        L_P, n = self._rebuild_shape()
        new = perceived_from_log(self._init_log, L_P, n, self.grid.K, self.grid.N,
                                 cfg.likelihood_floor)
        if not self._initialized:
            self._initialized = True
            if self._vintage is not None:
                vint = self._vintage
                w_p = cfg.perceived_prior_ratio * float(vint.p.mean())
                self.mu = MultiUniverse(vint.universes + new,
                                        np.concatenate([vint.p, np.full(len(new), w_p)]),
                                        belief_floor=cfg.belief_floor)
            else:
                self.mu = MultiUniverse(new, belief_floor=cfg.belief_floor)
        else:
            inject_universes(self.mu, new, "red", cfg.paper_literal_weights)
            self.mu.prune(cfg.max_universes)
            if cfg.regenerate_after_red and cfg.variant in ("standard", "theta"):
                self._inject_counterfactuals(obs.t)
        self._window_idx = None
        self._converged_for = 0
        self._auditor_active = False
        self._alert = "none"

    def _inject_counterfactuals(self, t: int) -> None:
        cfg = self.config
        new = generator(self.mu, self.shifts, self.grid, self.noise_std, cfg.generator_mode,
                        cfg.n_mc, self.rng, cfg.likelihood_floor)
        inject_universes(self.mu, new, "yellow", cfg.paper_literal_weights)
        self._prune()
        self.events.append((t, "generator"))

    def _prune(self) -> None:
        cfg = self.config
        if self.mu.L <= cfg.max_universes:
            return
        wid = self.mu.ids[self._window_idx] if self._window_idx is not None else None
        self.mu.prune(cfg.max_universes)
        self._window_idx = self.mu.ids.index(wid) if wid in self.mu.ids else None

    def _finish_audit(self, t: int) -> str | None:
        cfg = self.config
        pvals = [p for _, _, p in self.audit.audit_samples]
        if cfg.verbose_audit:
            self.audit_log.append({"t": t, "kind": "red_test", "pvalues": pvals,
                                   "threshold": cfg.alpha2 / max(len(pvals), 1)})
        if pvals and min(pvals) < cfg.alpha2 / len(pvals):
            self._red_card(t)
            return "red"
        self.audit.decay()
        self.audit.audit_samples.clear()
        return None

    def _red_card(self, t: int | None) -> None:
        self.events.append((t or 0, "red"))
        self.audit.reset()
        self._forced.clear()
        self._fresh_yellow = False
        self._standby = False
        self._alert = "none"
        self._queue_initiator()

    def _refresh_window_universe(self, t: int) -> None:
        cfg = self.config
        if t <= cfg.w or not self.audit.window:
            return
        u = window_variant_update(self.mu, list(self.audit.window), self.grid)
        if self._window_idx is None:
            inject_universes(self.mu, [u], "yellow")
            self._window_idx = self.mu.L - 1
            self._prune()
        else:
            self.mu.replace(self._window_idx, u)
