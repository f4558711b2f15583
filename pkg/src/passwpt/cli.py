"""Command-line entry points: solve one scenario, run a sweep, emit figure data."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ExperimentReport,
    ExperimentSpec,
    MissingAxis,
    convert_config_units,
    emit_figure_data,
    load_experiment_spec,
    run_drop,
    run_experiment,
)
from .scenario import ConfigError, ScenarioConfig, _load_mapping


def _build_config(path: str | None, **overrides) -> ScenarioConfig:
    data = {}
    if path:
        data = convert_config_units(_load_mapping(path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("waveguide_y", "candidate_x", "zeta"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return ScenarioConfig(**data)


def cmd_solve(args) -> int:
    config = _build_config(args.config)
    seed = args.seed if args.seed is not None else config.rng_seed
    row = run_drop(config, args.scheme, drop=0, seed=seed)
    row.pop("trace", None)
    row.pop("_state", None)
    print(json.dumps(row, indent=1, sort_keys=True, default=_default))
    return 0 if row["ok"] else 1


def cmd_sweep(args) -> int:
    spec = load_experiment_spec(args.config)
    if args.out:
        spec.out_dir = args.out
    if args.seed is not None:
        spec.seed = args.seed
    if args.drops is not None:
        spec.drops = args.drops
    if args.scheme:
        spec.schemes = tuple(args.scheme)
    report = run_experiment(spec)
    ok = sum(1 for r in report.rows if r["ok"])
    print(f"wrote {len(report.rows)} rows ({ok} ok) to {spec.out_dir}")
    return 0


def cmd_figure(args) -> int:
    data = json.loads(Path(args.report).read_text())
    aggregates = {}
    for key, value in data.get("aggregates", {}).items():
        scheme, _, val = key.partition("|")
        aggregates[(scheme, float(val))] = value
    report = ExperimentReport(
        spec_axis=data["spec_axis"], values=tuple(data["values"]),
        schemes=tuple(data["schemes"]), drops=data["drops"], seed=data["seed"],
        rows=data["rows"], aggregates=aggregates,
        provenance=data.get("provenance", {}),
    )
    try:
        path = emit_figure_data(report, args.figure, args.out or ".")
    except MissingAxis as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.ndarray, tuple)):
        return list(obj)
    raise TypeError(str(type(obj)))


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PASSWPT_LOG_LEVEL", "WARNING"))
    parser = argparse.ArgumentParser(
        prog="passwpt",
        description="Pinching-antenna wireless power transfer experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one scenario, print metrics JSON")
    p_solve.add_argument("--config", help="scenario TOML/JSON file")
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--scheme", default="pass_wpt",
                         choices=("pass_wpt", "pass_equal", "mimo"))
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run an experiment spec file")
    p_sweep.add_argument("--config", required=True, help="experiment TOML/JSON file")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--drops", type=int, default=None)
    p_sweep.add_argument("--scheme", action="append", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_fig = sub.add_parser("figure", help="emit CSV series for one figure family")
    p_fig.add_argument("--report", required=True, help="report.json from a sweep")
    p_fig.add_argument("--figure", required=True)
    p_fig.add_argument("--out", default=None)
    p_fig.set_defaults(func=cmd_figure)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
