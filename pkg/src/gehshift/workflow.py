"""Pipeline stages that read and write artifacts on disk.

The CLI is a thin argument-parsing layer over these functions.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .distance_metrics import GehConfig, Metric
from .eval_harness import (
    DIST_CORNER,
    EVAL_CORNER,
    DistanceMatrix,
    EvalMatrix,
    cross_evaluate,
    distance_matrix,
    write_matrix_csv,
)
from .intersection_sim import ControllerKind, SimConfig, default_scheme
from .manifest import MANIFEST_NAME, RunManifest
from .scenario_gen import SkewProfile, generate_suite
from .scenario_model import Scenario, ScenarioError, build_signature, load_scenario, save_scenario
from .stats_analysis import AnalysisReport, analyze
from .svgplot import scatter_svg

log = logging.getLogger(__name__)

METRIC_SHORT = {Metric.GEH_THRESHOLD: "geh", Metric.KL_HOURLY: "kl", Metric.KS_HOURLY: "ks"}
KIND_SHORT = {ControllerKind.FIXED_TIME: "fixed", ControllerKind.ACTUATED: "actuated"}
METRIC_LABEL = {
    Metric.GEH_THRESHOLD: "GEH distance (bins over threshold)",
    Metric.KL_HOURLY: "KL distance on hourly volumes (nats)",
    Metric.KS_HOURLY: "KS distance on hourly volumes",
}


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8", newline="\n")
    return path


def _write_csv(path: Path, rows: Sequence[Sequence]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# -- generate --------------------------------------------------------------

def write_suite(out_dir, count: int = 20, seed: int = 42, profile: SkewProfile = SkewProfile.DIRICHLET,
                n_vehicles: int = 4000, horizon_s: float = 3600.0,
                freeze_departures: bool = False) -> Tuple[List[Scenario], List[Path]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite = generate_suite(seed, count, SkewProfile(profile), n_vehicles, horizon_s, freeze_departures)
    paths = []
    for s in suite:
        p = out / f"{s.id}.json"
        save_scenario(s, p)
        paths.append(p)
    return suite, paths


def load_scenario_dir(path) -> List[Scenario]:
    path = Path(path)
    if not path.is_dir():
        raise ScenarioError(f"{path}: not a directory")
    files = sorted(p for p in path.glob("*.json") if p.name != MANIFEST_NAME)
    if not files:
        raise ScenarioError(f"{path}: no scenario files found")
    return [load_scenario(p) for p in files]


# -- distances -------------------------------------------------------------

def write_distances(scenarios: Sequence[Scenario], metric: Metric, out_csv, k: int = 12,
                    cfg: GehConfig = GehConfig()) -> Tuple[DistanceMatrix, List[Path]]:
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    sigs = [build_signature(s, k) for s in scenarios]
    dm = distance_matrix(sigs, metric, cfg)
    vals = dm.values.astype(np.int64) if dm.metric is Metric.GEH_THRESHOLD else dm.values
    p_csv = write_matrix_csv(out_csv, dm.scenario_ids, vals, DIST_CORNER)
    p_json = _write_json(out_csv.with_suffix(".json"), dm.to_dict())
    return dm, [p_csv, p_json]


# -- cross evaluation ------------------------------------------------------

EVAL_FILES = ("travel_time.csv", "throughput.csv", "unserved.csv", "degradation.csv", "evals.json")


def write_crosseval(scenarios: Sequence[Scenario], kind: ControllerKind, out_dir,
                    sim: SimConfig = SimConfig(), workers: int = 1) -> Tuple[EvalMatrix, List[Path]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    em = cross_evaluate(scenarios, kind, default_scheme(), sim, workers)
    ids = em.scenario_ids
    paths = [
        write_matrix_csv(out / "travel_time.csv", ids, em.travel_time_s, EVAL_CORNER),
        write_matrix_csv(out / "throughput.csv", ids, em.throughput, EVAL_CORNER),
        write_matrix_csv(out / "unserved.csv", ids, em.unserved, EVAL_CORNER),
        write_matrix_csv(out / "degradation.csv", ids, em.degradation_s, EVAL_CORNER),
    ]
    body = em.to_dict()
    body["sim_config"] = sim.to_dict()
    paths.append(_write_json(out / "evals.json", body))
    return em, paths


def load_evals(eval_dir) -> EvalMatrix:
    path = Path(eval_dir) / "evals.json"
    if not path.exists():
        raise FileNotFoundError(f"{eval_dir}: missing evals.json")
    return EvalMatrix.from_dict(json.loads(path.read_text(encoding="utf-8")))


# -- analysis --------------------------------------------------------------

def write_analysis(dm: DistanceMatrix, em: EvalMatrix, out_dir,
                   exclude_self: bool = False) -> Tuple[AnalysisReport, List[Path]]:
    out = Path(out_dir)
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    report = analyze(dm, em, exclude_self=exclude_self)
    paths = [
        _write_json(out / "report.json", report.to_dict()),
        _write_csv(out / "report.csv", report.csv_rows()),
    ]
    xlabel = METRIC_LABEL.get(dm.metric, dm.metric.value)
    kind = em.controller_kind.value.replace("_", "-")
    d = np.asarray(dm.values, dtype=float)
    n = len(report.scenario_ids)
    for i, sid in enumerate(report.scenario_ids):
        cols = [j for j in range(n) if not (exclude_self and j == i)]
        fit = report.per_training[sid]["travel_time"]
        svg = scatter_svg(
            d[i, cols], em.travel_time_s[i, cols],
            title=f"Travel time vs distance, {kind} controller calibrated on {sid} "
                  f"(R2={fit.r_squared:.2f}, p={fit.p_value:.2g})",
            xlabel=xlabel, ylabel="average travel time (s)", fit=fit,
            point_labels=[report.scenario_ids[j] for j in cols],
        )
        p = plots / f"travel_time_{sid}.svg"
        p.write_text(svg, encoding="utf-8", newline="\n")
        paths.append(p)

    tt = [report.per_training[s]["travel_time"] for s in report.scenario_ids]
    svg = scatter_svg(
        [r.p_value for r in tt], [r.r_squared for r in tt],
        title=f"R2 against p-value, {kind} controller, {dm.metric.value}",
        xlabel="p-value of slope", ylabel="R2", vline=0.05,
        point_labels=list(report.scenario_ids), x_range=(0.0, 1.0), y_range=(0.0, 1.0),
    )
    p = out / "r2_vs_p.svg"
    p.write_text(svg, encoding="utf-8", newline="\n")
    paths.append(p)

    avg = report.averaged
    for name, ys, fit, ylabel in (
        ("travel_time", avg.travel_time, avg.travel_time_fit, "mean travel time (s)"),
        ("throughput", avg.throughput, avg.throughput_fit, "mean throughput (veh)"),
    ):
        svg = scatter_svg(
            avg.x, ys, title=f"Averaged {name.replace('_', ' ')} vs distance, {kind} controller",
            xlabel=xlabel + (" (binned)" if avg.binned else ""), ylabel=ylabel, fit=fit,
        )
        p = out / f"averaged_{name}.svg"
        p.write_text(svg, encoding="utf-8", newline="\n")
        paths.append(p)
    return report, paths


# -- pipeline --------------------------------------------------------------

COMPARISON_HEADER = [
    "metric", "controller", "mean_r2", "fraction_significant", "positive_slope_fraction",
    "averaged_travel_time_slope", "averaged_throughput_slope", "n_scenarios",
]


def comparison_row(report: AnalysisReport) -> list:
    avg = report.averaged
    return [
        report.metric,
        report.controller_kind,
        report.mean_r_squared,
        report.fraction_significant,
        report.positive_slope_fraction,
        avg.travel_time_fit.slope if avg.travel_time_fit else float("nan"),
        avg.throughput_fit.slope if avg.throughput_fit else float("nan"),
        len(report.scenario_ids),
    ]


def run_pipeline(out_dir, seed: int = 42, count: int = 20, profile: SkewProfile = SkewProfile.DIRICHLET,
                 n_vehicles: int = 4000, horizon_s: float = 3600.0, k: int = 12,
                 cfg: GehConfig = GehConfig(), sim: SimConfig = SimConfig(), workers: int = 1,
                 exclude_self: bool = False,
                 metrics: Sequence[Metric] = tuple(Metric),
                 kinds: Sequence[ControllerKind] = (ControllerKind.FIXED_TIME, ControllerKind.ACTUATED),
                 ) -> Tuple[Dict[Tuple[str, str], AnalysisReport], Path]:
    """Generate, measure, cross-evaluate and analyse one suite end to end.

    Returns the reports keyed by ``(metric, controller kind)`` and the path of
    the written manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("pipeline", seed)
    manifest.add_config("generate", {"count": count, "seed": seed, "profile": SkewProfile(profile).value,
                                     "n_vehicles": n_vehicles, "horizon_s": horizon_s})
    manifest.add_config("distance", {"k": k, **cfg.to_dict()})
    manifest.add_config("simulate", sim.to_dict())
    manifest.add_config("analyze", {"exclude_self": exclude_self})
    produced: List[Path] = []

    log.info("generating %d scenarios (seed %d)", count, seed)
    suite, paths = write_suite(out / "scenarios", count, seed, profile, n_vehicles, horizon_s)
    produced += paths

    dms = {}
    for metric in metrics:
        log.info("distance matrix: %s", metric.value)
        dm, paths = write_distances(suite, metric, out / "distances" / f"{METRIC_SHORT[metric]}.csv", k, cfg)
        dms[metric] = dm
        produced += paths

    ems = {}
    for kind in kinds:
        log.info("cross-evaluating %s controller (%d x %d)", kind.value, count, count)
        em, paths = write_crosseval(suite, kind, out / "evals" / KIND_SHORT[kind], sim, workers)
        ems[kind] = em
        produced += paths

    reports = {}
    rows = [COMPARISON_HEADER]
    for metric in metrics:
        for kind in kinds:
            sub = out / "analysis" / f"{METRIC_SHORT[metric]}_{KIND_SHORT[kind]}"
            report, paths = write_analysis(dms[metric], ems[kind], sub, exclude_self)
            reports[(metric.value, kind.value)] = report
            produced += paths
            rows.append(comparison_row(report))
    produced.append(_write_csv(out / "comparison.csv", rows))
    as_json = [
        {key: (None if isinstance(v, float) and v != v else v) for key, v in zip(COMPARISON_HEADER, r)}
        for r in rows[1:]
    ]
    produced.append(_write_json(out / "comparison.json", as_json))
    manifest.record(out, produced)
    return reports, manifest.write(out)
