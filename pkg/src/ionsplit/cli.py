"""Command-line entry point: ``ionsplit <subcommand> --config cfg.json [overrides]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .experiments import KINDS, RUNNERS, ConfigError, ExperimentConfig, NonConvergenceError
from .quantum import ConvergenceError, GridError

EXIT_OK, EXIT_NONCONVERGED, EXIT_BAD_CONFIG = 0, 2, 3


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data: dict, assignment: str) -> None:
    """``protocol.t_f=4.4e-6`` style dotted assignment; values parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-object")
    node[parts[-1]] = _parse_value(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionsplit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. protocol.t_f=5.2e-6 (repeatable)")
        p.add_argument("--species")
        p.add_argument("--omega0-hz", type=float)
        p.add_argument("--t-f", type=float, help="protocol duration in seconds")
        p.add_argument("--order", type=int, choices=(11, 12))
        p.add_argument("--objective", choices=("plain", "perturbative", "residual"))
        p.add_argument("--engine", choices=("classical", "quantum", "both"))
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
    return parser


def load_config(args) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if data.get("kind", args.command) != args.command:
            raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {args.command!r}")
    data["kind"] = args.command
    flags = {"trap.species": args.species, "trap.omega0_hz": args.omega0_hz, "protocol.t_f": args.t_f,
             "protocol.order": args.order, "protocol.objective": args.objective,
             "simulation.engine": args.engine, "output.dir": args.out}
    for key, value in flags.items():
        if value is not None:
            apply_override(data, f"{key}={json.dumps(value)}")
    if args.workers is not None:
        data["workers"] = args.workers
    for item in args.set:
        apply_override(data, item)
    return ExperimentConfig.from_dict(data)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return str(obj)


def _summary(kind: str, result):
    if kind == "design":
        res, _, diag = result
        return {"free_params": list(res.free_params), "excess": res.excess, "converged": res.converged, **diag}
    return result


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        result = RUNNERS[args.command](config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (NonConvergenceError, ConvergenceError, GridError) as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    summary = _summary(args.command, result)
    print(json.dumps(summary, indent=2, default=_jsonable))
    if args.command == "design" and not result[0].converged:
        print("shooting did not converge; outputs hold the best simplex point", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
