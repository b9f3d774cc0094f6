"""Command-line front end.

Subcommands:

    simulate   synthesize a scenario and write dataset + truth CSVs
    fuse       run one filter variant over a scenario or dataset
    compare    run several variants on the identical stream
    bench      per-event timing across variants and window lengths

Configuration comes from an optional key=value text file (via --config)
with command-line flags taking precedence.  Exit codes: 0 on success,
2 for configuration/validation problems, 3 for data problems.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import write_events, write_truth
from .errors import ConfigError, DataError
from .eskf import VARIANTS
from .experiments import (
    RunConfig,
    bench,
    build_scenario,
    compare,
    run_experiment,
)
from .sim import generate_truth, sample_sensors

_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def load_config_file(path: str) -> dict[str, str]:
    """Parse a key = value config file; '#' starts a comment."""
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {path}")
    entries: dict[str, str] = {}
    for line_num, raw in enumerate(file.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_num} of {path} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def _coerce(name: str, value: str, target_type) -> object:
    try:
        if target_type is bool:
            lowered = value.lower()
            if lowered not in _BOOL_STRINGS:
                raise ValueError(f"expected a boolean, got {value!r}")
            return _BOOL_STRINGS[lowered]
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for '{name}': {exc}") from None


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_SIMPLE_TYPES = {
    "filter": str, "window": int, "rho": float, "beta": float,
    "sigma_mode": str, "sigma_static": float, "sigma_min": float,
    "sigma_max": float, "r0": float, "q0": float, "p0": float,
    "adapt_q": bool, "seed": int, "scenario": str, "dataset": str,
    "truth": str, "out": str, "duration": float, "imu_rate": float,
    "odom_rate": float, "sensors": int, "noise_std": float,
    "imu_accel_std": float, "imu_gyro_std": float,
    "jump_probability": float, "jump_magnitude": float,
    "jump_duration": int, "drift_rate": float, "drift_start": float,
    "drift_duration": float, "faulty_sensor": str,
}


def build_run_config(file_entries: dict[str, str],
                     overrides: dict[str, object]) -> RunConfig:
    """Merge defaults, config-file entries, and CLI overrides into a RunConfig."""
    config = RunConfig()
    for key, raw in file_entries.items():
        if key.startswith("r0."):
            sensor = key[3:]
            config.r0_overrides[sensor] = float(_coerce(key, raw, float))
            continue
        if key not in _SIMPLE_TYPES:
            raise ConfigError(f"unknown config key '{key}'")
        setattr(config, key, _coerce(key, raw, _SIMPLE_TYPES[key]))
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    return config


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--scenario", choices=("hover", "waypoints", "figure8"),
                        help="synthetic scenario name")
    parser.add_argument("--dataset", help="event CSV to fuse instead of a scenario")
    parser.add_argument("--truth", help="truth CSV for dataset-mode metrics")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    entries = load_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        entries[key.strip()] = value.strip()
    overrides = {
        "seed": args.seed,
        "scenario": args.scenario,
        "dataset": args.dataset,
        "truth": args.truth,
        "out": args.out,
    }
    if getattr(args, "filter", None):
        overrides["filter"] = args.filter
    return build_run_config(entries, overrides)


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if config.scenario is None:
        raise ConfigError("simulate requires a scenario")
    if config.out is None:
        raise ConfigError("simulate requires --out")
    config.dataset = None
    config.validate()
    scenario = build_scenario(config)
    truth = generate_truth(scenario)
    events = sample_sensors(truth, scenario)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_events(out_dir / "dataset.csv", events)
    write_truth(out_dir / "truth.csv", truth)
    print(f"wrote {len(events)} events to {out_dir / 'dataset.csv'}")
    return 0


def _cmd_fuse(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    metrics = result.metrics
    line = (f"{metrics.variant}: {metrics.correction_count} corrections, "
            f"dropped={sum(metrics.dropped.values())}")
    if metrics.rmse_position_total is not None:
        line += (f", rmse_pos={metrics.rmse_position_total:.4f} m"
                 f", rmse_vel={metrics.rmse_velocity_total:.4f} m/s"
                 f", nees={metrics.nees_mean:.2f}")
    print(line)
    if config.out:
        print(f"outputs in {config.out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    variants = [v.strip() for v in args.filters.split(",") if v.strip()]
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown filter variant '{variant}'")
    results = compare(config, variants)
    header = f"{'variant':<12}{'rmse_pos':>12}{'rmse_vel':>12}{'nees':>10}{'dropped':>9}"
    print(header)
    summary = {}
    for variant, result in results.items():
        m = result.metrics
        pos = f"{m.rmse_position_total:.4f}" if m.rmse_position_total is not None else "n/a"
        vel = f"{m.rmse_velocity_total:.4f}" if m.rmse_velocity_total is not None else "n/a"
        nees = f"{m.nees_mean:.2f}" if m.nees_mean is not None else "n/a"
        print(f"{variant:<12}{pos:>12}{vel:>12}{nees:>10}{sum(m.dropped.values()):>9}")
        summary[variant] = m.to_dict(include_timing=False)
    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "comparison.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    variants = [v.strip() for v in args.filters.split(",") if v.strip()]
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown filter variant '{variant}'")
    windows = [int(w) for w in args.windows.split(",") if w.strip()]
    rows = bench(config, variants, windows, repeats=args.repeats)
    print(f"{'variant':<12}{'window':>7}{'repeat':>7}{'mean_us':>10}{'max_us':>10}")
    for row in rows:
        print(f"{row['variant']:<12}{row['window']:>7}{row['repeat']:>7}"
              f"{row['mean_ns'] / 1e3:>10.1f}{row['max_ns'] / 1e3:>10.1f}")
    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "bench.json", "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corfuse",
        description="Robust adaptive sensor fusion: simulate, fuse, compare, bench.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a dataset from a scenario")
    _common_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fuse = sub.add_parser("fuse", help="run one filter over a stream")
    _common_flags(p_fuse)
    p_fuse.add_argument("--filter", choices=VARIANTS, help="filter variant")
    p_fuse.set_defaults(func=_cmd_fuse)

    p_cmp = sub.add_parser("compare", help="run several filters on one stream")
    _common_flags(p_cmp)
    p_cmp.add_argument("--filters", default=",".join(VARIANTS),
                       help="comma-separated variant list")
    p_cmp.set_defaults(func=_cmd_compare)

    p_bench = sub.add_parser("bench", help="time filters across window lengths")
    _common_flags(p_bench)
    p_bench.add_argument("--filters", default="r-amcckf,vb-amcckf",
                         help="comma-separated variant list")
    p_bench.add_argument("--windows", default="10", help="comma-separated window lengths")
    p_bench.add_argument("--repeats", type=int, default=1)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
