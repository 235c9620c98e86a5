"""Command line: generate-traces, run, sweep and verify."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from . import metrics
from .config import ConfigError, RunConfig, apply_overrides, dump_config, load_config
from .engine import World, config_hash, run_scenario
from .matching import verify_against_oracle
from .scenario import build_manhattan_grid, generate_traces, load_traces, save_traces

logger = logging.getLogger("mmv2v")

SWEEP_COLUMNS = ("capacity", "radius_m", "beamwidth_deg", "seed", "filter", "metric", "value", "samples")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file, or 'default'")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--seeds", type=int, metavar="N", help="number of consecutive seeds")
    p.add_argument("--out", metavar="DIR", help="output directory")


def _radio(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity", type=int, help="configured matching capacity c")
    p.add_argument("--radius-m", type=float, help="association radius R in metres")
    p.add_argument("--beamwidth-deg", type=float, help="half-power beamwidth in degrees")
    p.add_argument("--traces", metavar="PATH", help="trace CSV to use instead of generated traces")
    p.add_argument("--interference", choices=("on", "off"), help="account for co-slot interference")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmv2v", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("generate-traces", help="write synthetic mobility traces as CSV")
    _common(p)

    p = sub.add_parser("run", help="simulate one configuration")
    _common(p)
    _radio(p)

    p = sub.add_parser("sweep", help="simulate the capacity x radius x beamwidth grid")
    _common(p)
    _radio(p)

    p = sub.add_parser("verify", help="check the matching solver against the exhaustive oracle")
    p.add_argument("--instances", type=int, default=10_000)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-capacity", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    interference = getattr(args, "interference", None)
    return apply_overrides(cfg, **{
        "run.seed": args.seed,
        "run.seeds": args.seeds,
        "run.output": args.out,
        "run.traces": getattr(args, "traces", None),
        "matching.capacity": getattr(args, "capacity", None),
        "matching.radius": getattr(args, "radius_m", None),
        "radio.beamwidth_deg": getattr(args, "beamwidth_deg", None),
        "radio.interference": None if interference is None else interference == "on",
    })


def _world(cfg: RunConfig, seed: int) -> World:
    geometry = build_manhattan_grid(cfg.geometry_config())
    if cfg.run.traces is not None:
        traces = load_traces(cfg.resolve(cfg.run.traces), geometry, off_road=cfg.mobility.off_road,
                             slot_duration=cfg.mobility.slot_duration)
    else:
        m = cfg.mobility
        traces = generate_traces(geometry, m.vehicles, m.ecav_probability, m.duration, seed,
                                 base_speed=m.base_speed, slot_duration=m.slot_duration)
    return World(traces=traces, geometry=geometry, table=cfg.mcs_table())


def _meta(cfg: RunConfig, **cell) -> dict:
    return {"config": cfg.as_dict(), "cell": cell}


def cmd_generate(cfg: RunConfig) -> int:
    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    geometry = build_manhattan_grid(cfg.geometry_config())
    m = cfg.mobility
    for seed in cfg.seeds():
        traces = generate_traces(geometry, m.vehicles, m.ecav_probability, m.duration, seed,
                                 base_speed=m.base_speed, slot_duration=m.slot_duration)
        path = out / f"traces_seed{seed}.csv"
        save_traces(traces, path)
        print(f"wrote {path} ({len(traces.vehicle_ids())} vehicles, {len(traces.timeslots())} timeslots)")
    return 0


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.run.output)
    seeds = cfg.seeds()
    engine = cfg.engine_config()
    for seed in seeds:
        started = time.perf_counter()
        result = run_scenario(_world(cfg, seed), engine, seed, extra_meta=_meta(cfg, seed=seed))
        target = out if len(seeds) == 1 else out / f"seed_{seed}"
        metrics.write_outputs(result, target)
        (target / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
        logger.info("seed %d: %d timeslots in %.2f s", seed, len(result), time.perf_counter() - started)
        _print_summary(result, f"seed {seed}")
        print(f"wrote {target}")
    return 0


def _print_summary(result, label: str) -> None:
    for f, m, value, n in metrics.summary_rows(result):
        if n:
            print(f"{label} {f:9s} {m:22s} {value:.4f} (n={n})")


def cmd_sweep(cfg: RunConfig) -> int:
    out = Path(cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    cells = 0
    for seed in cfg.seeds():
        world = _world(cfg, seed)
        for c in cfg.sweep.capacities:
            for radius in cfg.sweep.radii:
                for theta in cfg.sweep.beamwidths_deg:
                    engine = cfg.engine_config(capacity=c, radius=radius, beamwidth_deg=theta)
                    meta = _meta(cfg, seed=seed, capacity=c, radius_m=radius, beamwidth_deg=theta)
                    result = run_scenario(world, engine, seed, extra_meta=meta)
                    cell = out / f"c{c}_R{radius:g}_theta{theta:g}" / f"seed_{seed}"
                    metrics.write_outputs(result, cell)
                    rows.extend((c, radius, theta, seed) + r for r in metrics.summary_rows(result))
                    cells += 1
                    logger.info("cell c=%d R=%g theta=%g seed=%d done", c, radius, theta, seed)
    path = out / "sweep_summary.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([metrics._fmt(x) for x in row])
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    print(f"{cells} runs ({cells // len(cfg.seeds())} per seed), config {config_hash(cfg.as_dict())}")
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    if args.instances < 1 or args.max_n < 2 or args.max_capacity < 1:
        print("verify: --instances >= 1, --max-n >= 2 and --max-capacity >= 1 required", file=sys.stderr)
        return 2
    started = time.perf_counter()
    report = verify_against_oracle(args.instances, args.max_n, args.max_capacity, args.seed)
    print(report.summary())
    print(f"sound={'yes' if report.sound else 'NO'} elapsed={time.perf_counter() - started:.1f}s")
    return 0 if report.sound else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = _load(args)
        return {"generate-traces": cmd_generate, "run": cmd_run, "sweep": cmd_sweep}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
