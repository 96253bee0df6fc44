"""Command-line front end.

Subcommands
-----------
kernel   trace the viability-kernel boundary and export its samples
mpc      run one closed-loop simulation and export the trajectory
horizon  sweep minimal stabilizing horizons (one of the four bundled tables
         or an explicit state list) and export the table
probe    tabulate value-function / minimal-stage-cost ratios

Configuration is a YAML document validated against a JSON schema (unknown
keys are rejected).  The four bundled presets reproduce the benchmark
experiments.  Exit codes: 0 ok, 2 config error, 3 numeric failure / horizon
not found, 4 infeasible closed loop.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .dynamics import CostKind, InputBox
from .horizon import (
    TABLE_NAMES,
    cost_controllability_probe,
    minimal_stabilizing_horizon,
    run_table,
)
from .io import (
    write_kinks_csv,
    write_manifest,
    write_probe_csv,
    write_run_csv,
    write_surface_csv,
    write_table_csv,
)
from .mpc import MpcConfig, run_mpc
from .viability import ViabilityKernel, WallConstraint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

_STATE = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_COST = {"enum": ["quartic", "quadratic"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "box": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lo": _PAIR, "hi": _PAIR},
        },
        "wall": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a1": {"type": "number"},
                "a2": {"type": "number"},
                "b": {"type": "number"},
            },
        },
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "speed_range": _PAIR,
                "n_tangent_speeds": {"type": "integer", "minimum": 1},
                "n_curve_samples": {"type": "integer", "minimum": 2},
            },
        },
        "mpc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x0", "n_steps", "dt"],
            "properties": {
                "x0": _STATE,
                "n_steps": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "cost": _COST,
                "sim_duration": {"type": "number", "exclusiveMinimum": 0},
                "conv_tol": {"type": "number", "exclusiveMinimum": 0},
                "settle_time": {"type": "number", "minimum": 0},
            },
        },
        "horizon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "table": {"enum": list(TABLE_NAMES)},
                "states": {"type": "array", "items": _STATE, "minItems": 1},
                "n_min": {"type": "integer", "minimum": 1},
                "n_max": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "cost": _COST,
                "sim_duration": {"type": "number", "exclusiveMinimum": 0},
                "conv_tol": {"type": "number", "exclusiveMinimum": 0},
                "settle_time": {"type": "number", "minimum": 0},
            },
        },
        "probe": {
            "type": "object",
            "additionalProperties": False,
            "required": ["states", "step_counts", "dt"],
            "properties": {
                "states": {"type": "array", "items": _STATE, "minItems": 1},
                "step_counts": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 1,
                },
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "cost": _COST,
            },
        },
    },
}


class ConfigError(Exception):
    pass


def load_config(path: str | None, preset: str | None) -> dict:
    if (path is None) == (preset is None):
        raise ConfigError("exactly one of --config or --preset is required")
    if preset is not None:
        res = importlib.resources.files("kernelmpc").joinpath(f"presets/{preset}.yaml")
        if not res.is_file():
            raise ConfigError(f"unknown preset {preset!r}")
        text = res.read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"config is not valid YAML: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config schema violation: {err.message}") from err
    return doc


def _box(cfg: dict) -> InputBox:
    section = cfg.get("box", {})
    kwargs = {}
    if "lo" in section:
        kwargs["lo"] = np.array(section["lo"], dtype=float)
    if "hi" in section:
        kwargs["hi"] = np.array(section["hi"], dtype=float)
    try:
        return InputBox(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _wall(cfg: dict) -> WallConstraint:
    section = cfg.get("wall", {})
    try:
        return WallConstraint(
            a1=section.get("a1", 1.0),
            a2=section.get("a2", 0.0),
            b=section.get("b", 1.0),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _mpc_config(section: dict, cfg: dict) -> MpcConfig:
    kwargs = dict(
        n_steps=section["n_steps"],
        dt=section["dt"],
        cost=CostKind(section.get("cost", "quartic")),
        box=_box(cfg),
        wall=_wall(cfg),
    )
    for key in ("sim_duration", "conv_tol", "settle_time"):
        if key in section:
            kwargs[key] = section[key]
    return MpcConfig(**kwargs)


def cmd_kernel(cfg: dict, out: Path) -> int:
    section = cfg.get("kernel", {})
    if "speed_range" in section:
        lo, hi = section["speed_range"]
        if not 0.0 < lo < hi:
            raise ConfigError("kernel.speed_range must satisfy 0 < lo < hi")
    kernel = ViabilityKernel(
        box=_box(cfg),
        **{k: v for k, v in section.items()},
    )
    t0 = time.perf_counter()
    kernel.fit()
    files = [
        write_surface_csv(out / "surface.csv", kernel),
        write_kinks_csv(out / "kinks.csv", kernel),
    ]
    write_manifest(out, "kernel", cfg, files,
                   extra={"timing_s": time.perf_counter() - t0})
    return EXIT_OK


def cmd_mpc(cfg: dict, out: Path) -> int:
    if "mpc" not in cfg:
        raise ConfigError("mpc command needs an 'mpc' config section")
    section = cfg["mpc"]
    mcfg = _mpc_config(section, cfg)
    t0 = time.perf_counter()
    run = run_mpc(np.array(section["x0"], dtype=float), mcfg)
    files = [write_run_csv(out / "run.csv", run)]
    verdict = {
        "converged": run.converged,
        "convergence_time": run.convergence_time,
        "failure_step": run.failure_step,
        "n_steps_simulated": run.n_steps,
    }
    write_manifest(out, "mpc", cfg, files,
                   extra={"verdict": verdict, "timing_s": time.perf_counter() - t0})
    if run.failure_step is not None or not run.converged:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_horizon(cfg: dict, out: Path, workers: int) -> int:
    section = cfg.get("horizon", {})
    if ("table" in section) == ("states" in section):
        raise ConfigError("horizon config needs exactly one of 'table' or 'states'")
    t0 = time.perf_counter()
    if "table" in section:
        report = run_table(section["table"], box=_box(cfg), workers=workers)
    else:
        if "dt" not in section:
            raise ConfigError("horizon.states requires 'dt'")
        template = _mpc_config({**section, "n_steps": 1}, cfg)
        entries = []
        for x0 in section["states"]:
            res = minimal_stabilizing_horizon(
                np.array(x0, dtype=float),
                template,
                n_min=section.get("n_min", 1),
                n_max=section.get("n_max", 64),
            )
            entries.append(
                {
                    "label": f"x0={x0}",
                    "x0": list(map(float, x0)),
                    "cost": template.cost.value,
                    "n_hat": res.n_hat,
                    "verdicts": [
                        {"n": n, "converged": c, "failure_step": f}
                        for n, c, f in res.verdicts
                    ],
                }
            )
        report = {"table": "custom", "dt": template.dt, "entries": entries}
    files = [write_table_csv(out / "table.csv", report)]
    sidecar = out / "table_runs.json"
    sidecar.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    files.append(sidecar)
    write_manifest(out, "horizon", cfg, files,
                   extra={"timing_s": time.perf_counter() - t0})
    if any(e["n_hat"] is None for e in report["entries"]):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_probe(cfg: dict, out: Path) -> int:
    if "probe" not in cfg:
        raise ConfigError("probe command needs a 'probe' config section")
    section = cfg["probe"]
    states = np.array(section["states"], dtype=float)
    steps = section["step_counts"]
    t0 = time.perf_counter()
    ratios = cost_controllability_probe(
        states, steps, section["dt"],
        kind=CostKind(section.get("cost", "quartic")),
        box=_box(cfg),
    )
    files = [write_probe_csv(out / "probe.csv", states, steps, section["dt"], ratios)]
    write_manifest(out, "probe", cfg, files,
                   extra={"timing_s": time.perf_counter() - t0})
    if not np.all(np.isfinite(ratios)):
        return EXIT_NUMERIC
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelmpc",
        description="Viability-kernel tracing and sampled-data MPC experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("kernel", "mpc", "horizon", "probe"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", help=f"bundled preset: {', '.join(TABLE_NAMES)}")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
        p.add_argument("--seed", type=int, default=0,
                       help="seed recorded in the manifest (outputs are deterministic)")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset)
        if args.seed:
            cfg = {**cfg, "seed": args.seed}
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "kernel":
            return cmd_kernel(cfg, out)
        if args.command == "mpc":
            return cmd_mpc(cfg, out)
        if args.command == "horizon":
            return cmd_horizon(cfg, out, args.workers)
        return cmd_probe(cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
