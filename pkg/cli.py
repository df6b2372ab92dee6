"""
Command-line front end.

    python -m cli plan scenarios/overtake.json --svg out/overtake.svg
    python -m cli batch scenarios --jobs 4
    python -m cli simulate scenarios/overtake.json --horizon 3 --replan 0.3
    python -m cli check scenarios/overtake.json
    python -m cli serve
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from config import settings
from models.api_models import BatchRow, CheckResult, SimSummary
from models.errors import PlannerError
from models.scenario import Scenario
from services.planner import plan, plan_response
from services.scenario_gen import random_scenario
from services.scenario_service import load_scenario_file, scenario_from_dict
from services.simulator import run_closed_loop
from services.svg_service import render_scene

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CORRIDOR = 2
EXIT_TIMEOUT = 3

_CONFIG_FLAGS = {
    "dt": "dt",
    "dmin": "d_min",
    "ades": "a_des",
    "wchange": "w_change",
    "wprofile": "w_profile",
    "timeout": "time_budget",
}


# ── Helpers ───────────────────────────────────────────────────────────────────

def _overrides(args: argparse.Namespace) -> dict[str, float]:
    return {field: getattr(args, flag) for flag, field in _CONFIG_FLAGS.items()
            if getattr(args, flag, None) is not None}


def _apply(scenario: Scenario, overrides: dict[str, float]) -> Scenario:
    if not overrides:
        return scenario
    return scenario.replace(config=replace(scenario.config, **overrides))


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT


# ── plan ──────────────────────────────────────────────────────────────────────

def cmd_plan(args: argparse.Namespace) -> int:
    try:
        scenario = _apply(load_scenario_file(args.scenario), _overrides(args))
        result = plan(scenario)
    except PlannerError as e:
        return _fail(str(e))

    out = _out_dir(args)
    response = plan_response(scenario, result)
    summary = response.model_dump(exclude={"elapsed_ms", "trajectory"})
    (out / f"{scenario.name}_corridor.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    if result.reference is not None:
        (out / f"{scenario.name}_trajectory.csv").write_text(result.reference.to_csv(), encoding="utf-8")
        (out / f"{scenario.name}_trajectory.json").write_text(result.reference.to_json(), encoding="utf-8")
        if scenario.epsg is not None:
            (out / f"{scenario.name}_trajectory.geojson").write_text(
                json.dumps(result.reference.to_geojson(scenario.epsg)), encoding="utf-8",
            )
    if args.svg:
        svg_path = Path(args.svg)
        svg_path.parent.mkdir(parents=True, exist_ok=True)
        svg_path.write_text(render_scene(scenario, result, args.times, args.scale), encoding="utf-8")

    if result.status == "timeout":
        print(f"{scenario.name}: search timed out", file=sys.stderr)
        return EXIT_TIMEOUT
    if result.status == "no_corridor":
        print(f"{scenario.name}: no corridor", file=sys.stderr)
        return EXIT_NO_CORRIDOR
    c = response.corridor
    print(f"{scenario.name}: lanelets {c.lanelets}, n_change {c.n_change}, J {c.J:.3f}")
    return EXIT_OK


# ── batch ─────────────────────────────────────────────────────────────────────

def _batch_one(item: tuple[str, Any], overrides: dict[str, float], closed_loop: bool,
               horizon: float, replan: float) -> dict[str, Any]:
    name, source = item
    try:
        scenario = load_scenario_file(source) if isinstance(source, str) else scenario_from_dict(source)
        scenario = _apply(scenario, overrides)
        result = plan(scenario)
    except PlannerError as e:
        logger.warning("Skipping %s: %s", name, e)
        return BatchRow(scenario=name, ms_per_s=0.0, solved=False, corridors=0).model_dump()
    planned = max(scenario.problem.goal_time[1], scenario.config.dt)
    row = BatchRow(
        scenario=scenario.name,
        ms_per_s=result.elapsed * 1e3 / planned,
        solved=result.solved,
        corridors=len(result.corridors),
        n_change=result.cost.n_change if result.cost else None,
        J=result.cost.J if result.cost else None,
    )
    if closed_loop:
        row.collision = run_closed_loop(scenario, horizon, replan).collided
    return row.model_dump()


def aggregate_row(rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    def mean(key: str) -> float | str:
        vals = [r[key] for r in rows if r[key] is not None]
        return round(sum(vals) / len(vals), 3) if vals else ""

    def pct(key: str) -> str:
        vals = [bool(r[key]) for r in rows if r[key] is not None]
        return f"{100.0 * sum(vals) / len(vals):.1f}%" if vals else ""

    return {
        "scenario": "ALL",
        "ms_per_s": mean("ms_per_s"),
        "solved": pct("solved"),
        "corridors": mean("corridors"),
        "n_change": mean("n_change"),
        "J": mean("J"),
        "collision": pct("collision"),
    }


def cmd_batch(args: argparse.Namespace) -> int:
    if args.random:
        items: list[tuple[str, Any]] = [
            (f"random_{args.seed + k:04d}", random_scenario(args.seed + k)) for k in range(args.random)
        ]
    else:
        directory = Path(args.directory)
        if not directory.is_dir():
            return _fail(f"{directory} is not a directory")
        items = [(p.stem, str(p)) for p in sorted(directory.glob("*.json"))]

    params = (_overrides(args), args.closed_loop, args.horizon, args.replan)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_batch_one, items, *[[p] * len(items) for p in params]))
    else:
        rows = [_batch_one(item, *params) for item in items]

    out = _out_dir(args)
    fields = list(BatchRow.model_fields)
    with open(out / "batch.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: "" if r[k] is None else r[k] for k in fields})
        writer.writerow(aggregate_row(rows))
    print(f"{len(rows)} scenarios, {sum(1 for r in rows if r['solved'])} solved -> {out / 'batch.csv'}")
    return EXIT_OK


# ── simulate ──────────────────────────────────────────────────────────────────

def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        scenario = _apply(load_scenario_file(args.scenario), _overrides(args))
    except PlannerError as e:
        return _fail(str(e))
    log = run_closed_loop(scenario, args.horizon, args.replan, settings.sim_dt)
    out = _out_dir(args)
    summary = SimSummary(**log.summary())
    (out / f"{scenario.name}_sim.csv").write_text(log.to_csv(), encoding="utf-8")
    (out / f"{scenario.name}_sim_summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    print(summary.model_dump_json())
    return EXIT_OK


# ── check ─────────────────────────────────────────────────────────────────────

def cmd_check(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except PlannerError as e:
        print(CheckResult(valid=False, errors=[str(e)]).model_dump_json())
        return EXIT_INPUT
    result = CheckResult(valid=True, lanelets=len(scenario.network.lanelets), obstacles=len(scenario.obstacles))
    print(result.model_dump_json())
    return EXIT_OK


# ── serve ─────────────────────────────────────────────────────────────────────

def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port)
    return EXIT_OK


# ── Parser ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corridor-planner", description="Reachability-based corridor planner")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def planner_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--dt", type=float)
        p.add_argument("--dmin", type=float)
        p.add_argument("--ades", type=float)
        p.add_argument("--wchange", type=float)
        p.add_argument("--wprofile", type=float)
        p.add_argument("--timeout", type=float, help="corridor search budget in seconds")
        p.add_argument("--out", help=f"output directory (default {settings.output_dir})")

    p = sub.add_parser("plan", help="plan one scenario")
    p.add_argument("scenario")
    planner_flags(p)
    p.add_argument("--svg", help="write an SVG rendering to this path")
    p.add_argument("--times", type=float, nargs="+", default=[0.0], help="obstacle snapshot times")
    p.add_argument("--scale", type=float, default=settings.svg_scale, help="pixels per metre")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("batch", help="plan every scenario of a directory")
    p.add_argument("directory", nargs="?", default="scenarios")
    planner_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--random", type=int, default=0, help="plan N generated scenarios instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--closed-loop", action="store_true", help="also simulate and report collisions")
    p.add_argument("--horizon", type=float, default=settings.plan_horizon)
    p.add_argument("--replan", type=float, default=settings.replan_period)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("simulate", help="closed-loop simulation with replanning")
    p.add_argument("scenario")
    planner_flags(p)
    p.add_argument("--horizon", type=float, default=settings.plan_horizon)
    p.add_argument("--replan", type=float, default=settings.replan_period)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="validate a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
