"""Cross-evaluation of scenario-calibrated controllers and pairwise distance matrices.

Matrix orientation is always row = training (calibration) scenario,
column = evaluation scenario.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import intersection_sim
from .distance_metrics import GehConfig, Metric, compute_distance
from .intersection_sim import (
    ControllerConfig,
    ControllerKind,
    PhaseScheme,
    SimConfig,
    calibrate,
    default_scheme,
)
from .scenario_model import Scenario, ScenarioSignature

__all__ = [
    "EvalMatrix",
    "DistanceMatrix",
    "cross_evaluate",
    "distance_matrix",
    "write_matrix_csv",
    "read_matrix_csv",
    "ORIENTATION",
]

ORIENTATION = "rows=training scenario, columns=evaluation scenario"
EVAL_CORNER = "train\\eval"
DIST_CORNER = "scenario"


@dataclass(frozen=True)
class EvalMatrix:
    scenario_ids: Tuple[str, ...]
    controller_kind: ControllerKind
    travel_time_s: np.ndarray
    throughput: np.ndarray
    unserved: np.ndarray
    controllers: Tuple[ControllerConfig, ...] = field(default=(), repr=False)
    n_evaluations: int = 0

    @property
    def degradation_s(self) -> np.ndarray:
        """Travel time minus the in-distribution (diagonal) travel time of the same row."""
        return self.travel_time_s - np.diag(self.travel_time_s)[:, None]

    def to_dict(self) -> dict:
        return {
            "orientation": ORIENTATION,
            "controller_kind": self.controller_kind.value,
            "scenario_ids": list(self.scenario_ids),
            "n_evaluations": self.n_evaluations,
            "travel_time_s": self.travel_time_s.tolist(),
            "throughput": self.throughput.tolist(),
            "unserved": self.unserved.tolist(),
            "degradation_s": self.degradation_s.tolist(),
            "controllers": {sid: c.to_dict() for sid, c in zip(self.scenario_ids, self.controllers)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalMatrix":
        ids = tuple(d["scenario_ids"])
        ctrls = d.get("controllers") or {}
        return cls(
            ids,
            ControllerKind.parse(d["controller_kind"]),
            np.asarray(d["travel_time_s"], dtype=float),
            np.asarray(d["throughput"], dtype=np.int64),
            np.asarray(d["unserved"], dtype=np.int64),
            tuple(ControllerConfig.from_dict(ctrls[s]) for s in ids if s in ctrls),
            int(d.get("n_evaluations", 0)),
        )


@dataclass(frozen=True)
class DistanceMatrix:
    scenario_ids: Tuple[str, ...]
    metric: Metric
    values: np.ndarray
    config: dict = field(default_factory=dict)
    pairs: Tuple[dict, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        is_geh = self.metric is Metric.GEH_THRESHOLD
        vals = self.values.astype(int).tolist() if is_geh else self.values.tolist()
        return {
            "metric": self.metric.value,
            "config": self.config,
            "scenario_ids": list(self.scenario_ids),
            "values": vals,
            "pairs": list(self.pairs),
        }


# -- cross evaluation ------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(scenarios, kind, scheme, sim):
    _WORKER_STATE.update(scenarios=scenarios, kind=kind, scheme=scheme, sim=sim)


def _evaluate_row(i: int, scenarios=None, kind=None, scheme=None, sim=None):
    if scenarios is None:
        scenarios = _WORKER_STATE["scenarios"]
        kind, scheme, sim = _WORKER_STATE["kind"], _WORKER_STATE["scheme"], _WORKER_STATE["sim"]
    train = scenarios[i]
    try:
        config = calibrate(train, kind, scheme, sim)
    except ValueError as exc:
        raise ValueError(f"calibration failed on scenario {train.id!r}: {exc}") from exc
    outcomes = [intersection_sim.simulate(s, config, sim) for s in scenarios]
    return config, outcomes


def cross_evaluate(scenarios: Sequence[Scenario], kind: ControllerKind, scheme: Optional[PhaseScheme] = None,
                   sim: SimConfig = SimConfig(), workers: int = 1) -> EvalMatrix:
    """Calibrate on each scenario and evaluate on all of them (N x N simulations)."""
    scenarios = list(scenarios)
    n = len(scenarios)
    if n < 2:
        raise ValueError("cross evaluation needs at least 2 scenarios")
    horizons = {s.horizon_s for s in scenarios}
    if len(horizons) != 1:
        raise ValueError(f"scenarios must share a horizon, found {sorted(horizons)}")
    kind = ControllerKind(kind)
    scheme = scheme or default_scheme()

    if workers <= 1:
        rows = [_evaluate_row(i, scenarios, kind, scheme, sim) for i in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(scenarios, kind, scheme, sim)) as pool:
            # map() yields in submission order, so completion order never matters
            rows = list(pool.map(_evaluate_row, range(n)))

    tt = np.zeros((n, n))
    tp = np.zeros((n, n), dtype=np.int64)
    un = np.zeros((n, n), dtype=np.int64)
    for i, (_, outcomes) in enumerate(rows):
        for j, o in enumerate(outcomes):
            tt[i, j] = o.avg_travel_time_s
            tp[i, j] = o.throughput_veh
            un[i, j] = o.unserved
    return EvalMatrix(
        tuple(s.id for s in scenarios), kind, tt, tp, un,
        tuple(config for config, _ in rows), sum(len(o) for _, o in rows),
    )


# -- distances -------------------------------------------------------------

def distance_matrix(signatures: Sequence[ScenarioSignature], metric: Metric,
                    cfg: GehConfig = GehConfig()) -> DistanceMatrix:
    metric = Metric(metric)
    sigs = list(signatures)
    n = len(sigs)
    if n and len({s.k for s in sigs}) != 1:
        raise ValueError("signatures must share k")
    if n and len({s.horizon_s for s in sigs}) != 1:
        raise ValueError("signatures must share the horizon")
    values = np.zeros((n, n))
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            dist = compute_distance(sigs[i], sigs[j], metric, cfg)
            values[i, j] = values[j, i] = dist.value
            pairs.append({"a": sigs[i].scenario_id, "b": sigs[j].scenario_id, **dist.to_dict()})
    config = {"k": sigs[0].k if sigs else None}
    if metric is Metric.GEH_THRESHOLD:
        config.update(cfg.to_dict())
    return DistanceMatrix(tuple(s.scenario_id for s in sigs), metric, values, config, tuple(pairs))


# -- CSV -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isfinite(v) and v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def matrix_csv_text(ids: Sequence[str], values: np.ndarray, corner: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *ids])
    for sid, row in zip(ids, values):
        w.writerow([sid, *(_fmt(v) for v in row)])
    return buf.getvalue()


def write_matrix_csv(path, ids: Sequence[str], values: np.ndarray, corner: str = DIST_CORNER) -> Path:
    path = Path(path)
    path.write_text(matrix_csv_text(ids, values, corner), encoding="utf-8", newline="")
    return path


def read_matrix_csv(path) -> Tuple[List[str], np.ndarray, str]:
    """Read a square matrix CSV; returns ``(ids, values, corner label)``."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    corner, *ids = rows[0]
    body = rows[1:]
    if len(body) != len(ids):
        raise ValueError(f"{path}: expected {len(ids)} data rows, found {len(body)}")
    values = np.zeros((len(ids), len(ids)))
    for r, row in enumerate(body):
        if len(row) != len(ids) + 1:
            raise ValueError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(ids) + 1}")
        if row[0] != ids[r]:
            raise ValueError(f"{path}: row label {row[0]!r} does not match column id {ids[r]!r}")
        values[r] = [float(x) for x in row[1:]]
    return ids, values, corner


def load_distance_matrix(csv_path) -> DistanceMatrix:
    """Load a distance CSV, taking the metric from the sibling ``.json`` when present."""
    csv_path = Path(csv_path)
    ids, values, _ = read_matrix_csv(csv_path)
    sidecar = csv_path.with_suffix(".json")
    metric, config = Metric.GEH_THRESHOLD, {}
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        metric = Metric.parse(meta.get("metric", metric.value))
        config = meta.get("config", {})
    return DistanceMatrix(tuple(ids), metric, values, config)

