"""Command-line entry point: ``gehshift <command> ...``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .distance_metrics import GehConfig, Metric
from .eval_harness import load_distance_matrix
from .intersection_sim import ConfigError, ControllerConfig, ControllerKind, SimConfig, simulate
from .manifest import RunManifest
from .scenario_gen import SkewProfile
from .scenario_model import ScenarioError, load_scenario
from .stats_analysis import NumericError
from . import workflow

OUT_ENV = "GEHSHIFT_OUT"
METRIC_CHOICES = ["geh", "kl", "ks"]
CONTROLLER_CHOICES = ["fixed", "actuated"]

log = logging.getLogger("gehshift")


def _lanes(text: str):
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected three integers L,T,R") from None
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError("expected three positive integers L,T,R")
    return tuple(parts)


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lanes", type=_lanes, default=(1, 1, 1), metavar="L,T,R",
                   help="left, through and right lanes per approach (default 1,1,1)")
    p.add_argument("--headway", type=float, default=2.0, help="saturation headway in seconds (default 2.0)")


def _sim_config(args) -> SimConfig:
    left, through, right = args.lanes
    return SimConfig(saturation_headway_s=args.headway, left_turn_lanes=left,
                     through_lanes=through, right_turn_lanes=right)


def _add_geh_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=12, help="histogram bins over the horizon (default 12)")
    p.add_argument("--threshold", type=float, default=5.0, help="per-bin GEH threshold (default 5.0)")
    p.add_argument("--factor-two", action="store_true", help="use sqrt(2(a-b)^2/(a+b)) per bin")
    p.add_argument("--rate-scale", action="store_true", help="convert bin counts to veh/h first")


def _geh_config(args) -> GehConfig:
    return GehConfig(args.threshold, args.factor_two, args.rate_scale)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gehshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random scenario suite")
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--profile", choices=[p.value for p in SkewProfile], default="dirichlet")
    g.add_argument("--vehicles", type=int, default=4000)
    g.add_argument("--horizon", type=float, default=3600.0)
    g.add_argument("--freeze-departures", action="store_true",
                   help="share one set of departure times across the suite")
    g.add_argument("--out", type=Path)

    d = sub.add_parser("distance", help="pairwise scenario distance matrix")
    d.add_argument("--scenarios", type=Path, required=True)
    d.add_argument("--metric", choices=METRIC_CHOICES, default="geh")
    _add_geh_args(d)
    d.add_argument("--out", type=Path, help="matrix CSV path; a .json sibling is written too")

    s = sub.add_parser("simulate", help="run one scenario under one controller")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--controller", type=Path, required=True, help="controller config JSON")
    _add_sim_args(s)

    c = sub.add_parser("cross-eval", aliases=["crosseval"], help="calibrate on each scenario, evaluate on all")
    c.add_argument("--scenarios", type=Path, required=True)
    c.add_argument("--controller", choices=CONTROLLER_CHOICES, default="actuated")
    c.add_argument("--workers", type=int, default=1)
    _add_sim_args(c)
    c.add_argument("--out", type=Path)

    a = sub.add_parser("analyze", help="regress performance on distance")
    a.add_argument("--distances", type=Path, required=True, help="distance matrix CSV")
    a.add_argument("--evals", type=Path, required=True, help="cross-eval output directory")
    a.add_argument("--exclude-self", action="store_true", help="drop the self-evaluation point")
    a.add_argument("--out", type=Path)

    p = sub.add_parser("pipeline", help="generate, distance, cross-eval and analyze in one run")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--profile", choices=[x.value for x in SkewProfile], default="dirichlet")
    p.add_argument("--vehicles", type=int, default=4000)
    p.add_argument("--horizon", type=float, default=3600.0)
    _add_geh_args(p)
    _add_sim_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--out", type=Path)
    return parser


def _out_dir(parser, args) -> Path:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    parser.error(f"the following arguments are required: --out (or set {OUT_ENV})")


def cmd_generate(args, parser) -> int:
    out = _out_dir(parser, args)
    manifest = RunManifest("generate", args.seed)
    manifest.add_config("generate", {"count": args.count, "seed": args.seed, "profile": args.profile,
                                     "n_vehicles": args.vehicles, "horizon_s": args.horizon,
                                     "freeze_departures": args.freeze_departures})
    _, paths = workflow.write_suite(out, args.count, args.seed, args.profile, args.vehicles,
                                    args.horizon, args.freeze_departures)
    manifest.record(out, paths)
    manifest.write(out)
    print(f"wrote {len(paths)} scenarios to {out}")
    return 0


def cmd_distance(args, parser) -> int:
    out = args.out
    if out is None:
        env = os.environ.get(OUT_ENV)
        if not env:
            parser.error(f"the following arguments are required: --out (or set {OUT_ENV})")
        out = Path(env) / f"{args.metric}.csv"
    scenarios = workflow.load_scenario_dir(args.scenarios)
    dm, paths = workflow.write_distances(scenarios, Metric.parse(args.metric), out, args.k, _geh_config(args))
    print(f"wrote {len(dm.scenario_ids)}x{len(dm.scenario_ids)} {dm.metric.value} matrix to {paths[0]}")
    return 0


def cmd_simulate(args, parser) -> int:
    scenario = load_scenario(args.scenario)
    controller = ControllerConfig.from_dict(json.loads(args.controller.read_text(encoding="utf-8")))
    outcome = simulate(scenario, controller, _sim_config(args))
    print(json.dumps(outcome.to_dict(), indent=2))
    return 0


def cmd_crosseval(args, parser) -> int:
    out = _out_dir(parser, args)
    scenarios = workflow.load_scenario_dir(args.scenarios)
    kind = ControllerKind.parse(args.controller)
    sim = _sim_config(args)
    manifest = RunManifest("cross-eval")
    manifest.add_config("simulate", sim.to_dict())
    manifest.add_config("cross_eval", {"controller": kind.value, "scenarios": [s.id for s in scenarios]})
    em, paths = workflow.write_crosseval(scenarios, kind, out, sim, max(1, args.workers))
    manifest.record(out, paths)
    manifest.write(out)
    print(f"{em.n_evaluations} evaluations written to {out}")
    return 0


def cmd_analyze(args, parser) -> int:
    out = _out_dir(parser, args)
    dm = load_distance_matrix(args.distances)
    em = workflow.load_evals(args.evals)
    manifest = RunManifest("analyze")
    manifest.add_config("analyze", {"metric": dm.metric.value, "controller": em.controller_kind.value,
                                    "exclude_self": args.exclude_self})
    report, paths = workflow.write_analysis(dm, em, out, args.exclude_self)
    manifest.record(out, paths)
    manifest.write(out)
    print(f"fraction_significant={report.fraction_significant:.3f} mean_r2={report.mean_r_squared:.3f} "
          f"-> {out}")
    return 0


def cmd_pipeline(args, parser) -> int:
    out = _out_dir(parser, args)
    reports, manifest = workflow.run_pipeline(
        out, args.seed, args.count, args.profile, args.vehicles, args.horizon, args.k,
        _geh_config(args), _sim_config(args), max(1, args.workers), args.exclude_self,
    )
    print(f"{'metric':<14} {'controller':<11} {'mean_r2':>8} {'frac_sig':>8} {'pos_slope':>9}")
    for (metric, kind), r in reports.items():
        print(f"{metric:<14} {kind:<11} {r.mean_r_squared:8.3f} {r.fraction_significant:8.2f} "
              f"{r.positive_slope_fraction:9.2f}")
    print(f"manifest: {manifest}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "distance": cmd_distance,
    "simulate": cmd_simulate,
    "cross-eval": cmd_crosseval,
    "crosseval": cmd_crosseval,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except (ScenarioError, ConfigError, NumericError, ValueError, KeyError, OSError) as exc:
        print(f"gehshift {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
