"""Command-line entry point: ``acidp run|case|criteo|validate``.

Exit codes: 0 on success, 1 on a configuration or usage error, 2 when a
simulation fails or a validation check does not pass.
"""

from __future__ import annotations

import argparse
import ast
import logging
import sys
from dataclasses import replace

from .core import ConfigError
from .harness import (ExperimentConfig, PolicySpec, SummaryRow, load_config,
                      run_experiment)

log = logging.getLogger("acidp")

DEFAULT_OUT = "acidp-out"
VARIANTS = {"standard": "acidp", "theta": "acidp-theta", "window": "acidp-window",
            "no_audit": "acidp-noaudit"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we want 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_policy(text: str) -> PolicySpec:
    """``key`` or ``key:name=value,name=value`` (values parsed as Python literals)."""
    key, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        name, eq, val = item.partition("=")
        if not eq or not name:
            raise ConfigError(f"bad policy parameter {item!r} in {text!r}")
        params[name.strip()] = _value(val.strip())
    return PolicySpec(key.strip(), params)


def _add_common(p: argparse.ArgumentParser, default_trials: int | None) -> None:
    p.add_argument("--trials", type=int, default=default_trials)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory for traces and summary.csv")
    p.add_argument("--policy", action="append", default=None, metavar="KEY[:k=v,...]",
                   help="policy to run; repeatable")
    p.add_argument("--variant", choices=sorted(VARIANTS), default=None,
                   help="ACIDP variant, used when no --policy is given")
    p.add_argument("--paper-literal-time", action="store_true")
    p.add_argument("--paper-literal-noise", action="store_true")
    p.add_argument("--paper-literal-weights", action="store_true")
    p.add_argument("--verbose-audit", action="store_true")
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acidp", description="Non-stationary dynamic pricing experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment described by a TOML file")
    run.add_argument("config")
    _add_common(run, None)

    case = sub.add_parser("case", help="one of the six simulated scenarios")
    case.add_argument("case_id", type=int, choices=range(1, 7), metavar="{1..6}")
    _add_common(case, 10)

    criteo = sub.add_parser("criteo", help="demand-table scenario (T=6000, K=50, N=500)")
    criteo.add_argument("--table", default=None, help="demand CSV (default: bundled table)")
    _add_common(criteo, 1)

    sub.add_parser("validate", help="run the built-in self-checks")
    return parser


def _policies(args) -> list[PolicySpec]:
    if args.policy:
        specs = [parse_policy(p) for p in args.policy]
    else:
        specs = [PolicySpec(VARIANTS[args.variant or "standard"])]
    flags = {name: True for name in ("paper_literal_time", "paper_literal_noise",
                                     "paper_literal_weights") if getattr(args, name)}
    out = []
    for spec in specs:
        if spec.key.startswith("acidp"):
            params = dict(spec.params)
            if args.variant and args.policy:
                params.setdefault("variant", args.variant)
            params.update(flags)
            spec = PolicySpec(spec.key, params, spec.label if spec.params == params else "")
        out.append(spec)
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    for attr, name in (("trials", "trials"), ("seed", "base_seed"), ("horizon", "horizon"),
                       ("out", "out"), ("workers", "workers")):
        value = getattr(args, attr)
        if value is not None:
            changes[name] = value
    if args.verbose_audit:
        changes["verbose_audit"] = True
    if args.policy or args.variant:
        changes["policies"] = _policies(args)
    return replace(cfg, **changes) if changes else cfg


def build_config(args) -> ExperimentConfig:
    if args.command == "run":
        return _apply_overrides(load_config(args.config), args)
    base = dict(trials=args.trials, base_seed=args.seed or 0, out=args.out or DEFAULT_OUT,
                verbose_audit=args.verbose_audit, workers=args.workers or 1)
    if args.horizon is not None:
        base["horizon"] = args.horizon
    policies = _policies(args)
    if args.command == "case":
        return ExperimentConfig(policies, case=args.case_id, **base)
    return ExperimentConfig.criteo(policies, table=args.table, **base)


def print_summary(rows: list[SummaryRow], stream=None) -> None:
    stream = stream or sys.stdout
    width = max(len(r.policy) for r in rows)
    hp = max([len(r.hyperparameters) for r in rows] + [15])
    print(f"{'policy':<{width}}  {'hyperparameters':<{hp}}  {'mean':>10}  {'std':>10}  "
          f"{'max':>10}  {'min':>10}", file=stream)
    for r in rows:
        print(f"{r.policy:<{width}}  {r.hyperparameters:<{hp}}  {r.mean_regret:10.2f}  "
              f"{r.standard_error:10.2f}  {r.max:10.2f}  {r.min:10.2f}", file=stream)


def _validate() -> int:
    from .validation import run_all

    ok = True
    for name, passed, detail in run_all():
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return 0 if ok else 2


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return _validate()
    try:
        cfg = build_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        rows, _ = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any simulation failure maps to exit 2
        log.debug("run failed", exc_info=True)
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    print_summary(rows)
    if cfg.out:
        print(f"traces and summary.csv written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
