"""Command line entry point.

Exit codes: 0 success, 1 validation failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import analytics as an
from . import experiments, fading, flow
from .config import ScenarioConfig, load_config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BAD_INPUT = 2


class BadInput(Exception):
    pass


def _parse_set(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise BadInput(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise BadInput(f"--set {key}: {value!r} is not a number") from None
    return out


def _parse_grid(text: str | None) -> list[float]:
    """``a,b,c`` or ``start:stop:num`` (inclusive, evenly spaced)."""
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            n = int(num)
            if n < 2:
                raise BadInput("grid needs at least two points")
            lo, hi = float(start), float(stop)
            return [lo + (hi - lo) * i / (n - 1) for i in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise BadInput(f"cannot parse grid {text!r}") from None


def _config(args: argparse.Namespace) -> ScenarioConfig:
    base = load_config(args.config) if args.config else ScenarioConfig()
    overrides = _parse_set(args.set)
    if not overrides:
        return base
    data = base.to_dict()
    data.update(overrides)
    return ScenarioConfig.from_dict(data)


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _require_sim_args(args: argparse.Namespace, what: str) -> None:
    missing = [f"--{n}" for n in ("seed", "trials", "out") if getattr(args, n) is None]
    if missing:
        raise BadInput(f"{what} draws random samples and needs {', '.join(missing)}")


def _cmd_sweep(args: argparse.Namespace) -> int:
    if experiments.EXPERIMENTS[args.experiment]["mc"]:
        _require_sim_args(args, f"sweep {args.experiment}")
    cfg = _config(args)
    spec = experiments.SweepSpec(
        experiment=args.experiment,
        grid=_parse_grid(args.grid),
        trials=args.trials or 1,
        seed=args.seed or 0,
        shards=args.shards,
        workers=args.workers,
        base=cfg,
    )
    _write(experiments.run_sweep(spec), args.out)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    _require_sim_args(args, "validate")
    extra = []
    if args.coefficients:
        try:
            extra = json.loads(Path(args.coefficients).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BadInput(f"cannot read coefficients: {exc}") from None
        if not isinstance(extra, list):
            raise BadInput("coefficients file must hold a JSON list of objects")
    report = experiments.validate(_config(args), args.trials, args.seed,
                                  shards=args.shards, extra_coefficients=extra)
    _write(report.to_csv(), args.out)
    for check in report.checks:
        if not check.passed:
            print(f"FAIL {check.name}: {check.measured:.6g} > {check.tolerance:.6g} {check.detail}",
                  file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _config(args)
    plan = flow.optimize_density(cfg, interference=not args.no_interference, mode=args.mode,
                                 outage_target=args.outage_target)
    doc = {
        "feasible": plan.feasible,
        "binding": plan.binding,
        "mu_star": plan.mu_star,
        "v_star": plan.v_star,
        "q_star": plan.q_star,
        "v_safe": plan.bounds.v_safe,
        "v_data": plan.bounds.v_data,
        "worst_rate_mbps": plan.worst_rate * cfg.bandwidth / 1e6,
        "diagnostics": plan.diagnostics,
    }
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _cmd_outage(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = an.rate_report(cfg, args.mu, args.v)
    doc = {"mu": args.mu, "v": args.v, "outage": report.outage,
           "ho_cost": report.ho_cost, "saturated": report.saturated}
    if args.trials is not None:
        if args.seed is None:
            raise BadInput("a simulated outage needs --seed")
        est = fading.simulate_ho_outage(cfg, args.mu, args.v, args.trials, args.seed,
                                        shards=args.shards)
        doc.update(mc_outage=est.outage, mc_stderr=est.stderr, trials=args.trials)
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _cmd_capacity(args: argparse.Namespace) -> int:
    cfg = _config(args)
    report = an.rate_report(cfg, args.mu, args.v, method="quadrature")
    doc = {"mu": args.mu, "v": args.v,
           "ergodic_rate_mbps": report.ergodic_rate / 1e6,
           "ho_aware_rate_mbps": report.ho_aware_rate / 1e6,
           "ho_cost": report.ho_cost}
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one scenario field (repeatable)")
    common.add_argument("--out", help="output file (stdout when omitted)")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--shards", type=int, default=1)

    parser = argparse.ArgumentParser(prog="v2iflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common, sim], help="regenerate a figure sweep as CSV")
    p.add_argument("experiment", choices=sorted(experiments.EXPERIMENTS))
    p.add_argument("--grid", help="a,b,c or start:stop:num")
    p.add_argument("--workers", type=int, default=1, help="threads for grid points")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", parents=[common, sim],
                       help="closed form vs quadrature vs simulation")
    p.add_argument("--coefficients", help="JSON list of extra {a, b, ...} sets to check")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("optimize", parents=[common], help="optimal BS density and speed")
    p.add_argument("--no-interference", action="store_true")
    p.add_argument("--mode", choices=("mean", "outage"), default="mean")
    p.add_argument("--outage-target", type=float, default=0.1)
    p.set_defaults(func=_cmd_optimize)

    for name, func, text in (("outage", _cmd_outage, "worst-case outage probability"),
                             ("capacity", _cmd_capacity, "worst-case ergodic rate")):
        p = sub.add_parser(name, parents=[common, sim] if name == "outage" else [common],
                           help=text)
        p.add_argument("--mu", type=float, required=True, help="BS density (1/m)")
        p.add_argument("--v", type=float, required=True, help="speed (m/s)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_BAD_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
