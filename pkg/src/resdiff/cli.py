"""
Command line entry point.

    resdiff presets
    resdiff run --preset stationary-attack --seed 3 --out-dir out/
    resdiff sweep-f --preset resilient --runs 5 --F 0,1,2,3,4,5
    resdiff plan-attack --preset network-attack --seed 0

Exit status is 0 on success, 2 for an invalid configuration and 1 for any
other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .attack import greedy_dominating_set
from .scenario import (PRESET_NOTES, ConfigError, RecordSpec, ScenarioConfig, build, preset,
                       preset_names, run_scenario, sweep_F)

RECORD_FIELDS = ("states", "weights", "topology_events", "msd")


def _record(text) -> RecordSpec:
    names = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [n for n in names if n not in RECORD_FIELDS]
    if unknown:
        raise ConfigError("--record", f"unknown series {unknown[0]!r}; choose from {', '.join(RECORD_FIELDS)}")
    return RecordSpec(**{f: f in names for f in RECORD_FIELDS})


def _config(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise ConfigError("--config", "give either --config or --preset, not both")
    if args.config:
        try:
            cfg = ScenarioConfig.load(args.config)
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from exc
    else:
        cfg = preset(args.preset or "stationary-baseline")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "iterations", None) is not None:
        changes["iterations"] = args.iterations
    if getattr(args, "record", None) is not None:
        changes["record"] = _record(args.record)
    return cfg.replace(**changes) if changes else cfg


def cmd_presets(args):
    if args.show:
        print(preset(args.show).to_yaml(), end="")
        return
    width = max(map(len, preset_names()))
    for name in preset_names():
        print(f"{name:<{width}}  {PRESET_NOTES[name]}")


def cmd_run(args):
    cfg = _config(args)
    for run in range(cfg.runs):
        trace = run_scenario(cfg, run)
        summary = trace.summary()
        if args.out_dir:
            out = Path(args.out_dir)
            trace.write(out / f"run{run}" if cfg.runs > 1 else out)
        line = {k: summary.get(k) for k in ("preset", "seed", "links_final",
                                            "cross_cluster_links_final", "steady_state_msd_db")}
        print(json.dumps(line))


def cmd_sweep(args):
    cfg = _config(args)
    try:
        values = [int(x) for x in args.F.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError("--F", "expected a comma separated list of integers") from exc
    rows = sweep_F(cfg, values)
    for row in rows:
        label = "ncop" if row["F"] is None else f"F={row['F']}"
        print(f"{label:>6}  msd={row['msd']:.6g}  ({row['msd_db']:.2f} dB)")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["F", "msd", "msd_db"])
            for row in rows:
                w.writerow(["ncop" if row["F"] is None else row["F"],
                            f"{row['msd']:.15g}", f"{row['msd_db']:.15g}"])


def cmd_plan(args):
    cfg = _config(args)
    setup = build(cfg, cfg.seed)
    nodes = greedy_dominating_set(setup.topology)
    print(json.dumps({"seed": cfg.seed, "n_agents": cfg.n_agents, "size": len(nodes),
                      "dominating_set": sorted(nodes)}))


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resdiff", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, runs=True):
        sp.add_argument("--config", help="YAML scenario file")
        sp.add_argument("--preset", help="named preset (see `presets`)")
        sp.add_argument("--seed", type=int)
        if runs:
            sp.add_argument("--runs", type=int)
            sp.add_argument("--iterations", type=int)

    sp = sub.add_parser("presets", help="list the built-in scenarios")
    sp.add_argument("--show", metavar="NAME", help="print one preset as YAML")
    sp.set_defaults(func=cmd_presets)

    sp = sub.add_parser("run", help="run a scenario and write its trace")
    scenario_args(sp)
    sp.add_argument("--out-dir")
    sp.add_argument("--record", help="comma separated: " + ",".join(RECORD_FIELDS))
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep-f", help="steady-state MSD against the filter bound F")
    scenario_args(sp)
    sp.add_argument("--F", default="0,1,2,3,4,5")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("plan-attack", help="print a greedy dominating set of the topology")
    scenario_args(sp, runs=False)
    sp.set_defaults(func=cmd_plan)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit status 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
