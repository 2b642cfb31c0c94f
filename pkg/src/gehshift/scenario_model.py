"""Scenarios, traffic movements and per-movement demand histograms.

A scenario is the list of vehicles (departure time + movement) offered to a
single four-leg intersection over a horizon.  Its signature is one histogram
of arrival counts per movement over ``k`` equal-width time bins.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

__all__ = [
    "Approach",
    "Turn",
    "MovementId",
    "MOVEMENTS",
    "Vehicle",
    "Scenario",
    "Histogram",
    "ScenarioSignature",
    "ScenarioError",
    "build_signature",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "load_edge_map",
    "import_sumo_routes",
]

DEFAULT_K = 12


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario data."""


class Approach(str, Enum):
    N = "N"
    S = "S"
    E = "E"
    W = "W"


class Turn(str, Enum):
    L = "L"
    T = "T"
    R = "R"


class MovementId(NamedTuple):
    approach: Approach
    turn: Turn

    def __str__(self) -> str:
        return f"{self.approach.value}_{self.turn.value}"

    @property
    def index(self) -> int:
        return _MOVEMENT_INDEX[self]

    @classmethod
    def parse(cls, token: str) -> "MovementId":
        try:
            return _MOVEMENT_BY_NAME[token]
        except (KeyError, TypeError):
            raise ScenarioError(f"unknown movement {token!r}") from None


# Canonical order: approaches N, S, E, W; turns L, T, R within each approach.
MOVEMENTS: Tuple[MovementId, ...] = tuple(
    MovementId(a, t) for a in Approach for t in Turn
)
_MOVEMENT_INDEX = {m: i for i, m in enumerate(MOVEMENTS)}
_MOVEMENT_BY_NAME = {str(m): m for m in MOVEMENTS}


class Vehicle(NamedTuple):
    depart_s: float
    movement: MovementId


@dataclass(frozen=True)
class Scenario:
    """Demand record for one horizon.

    Vehicles are stably sorted by departure on construction and every
    departure must lie in ``[0, horizon_s]``.
    """

    id: str
    horizon_s: float
    vehicles: Tuple[Vehicle, ...] = ()

    def __post_init__(self):
        if not (isinstance(self.horizon_s, (int, float)) and self.horizon_s > 0
                and math.isfinite(self.horizon_s)):
            raise ScenarioError(f"horizon_s must be a positive number, got {self.horizon_s!r}")
        vehicles = []
        for i, v in enumerate(self.vehicles):
            if not isinstance(v, Vehicle):
                v = Vehicle(*v)
            if not isinstance(v.movement, MovementId):
                raise ScenarioError(f"vehicle {i}: movement must be a MovementId, got {v.movement!r}")
            t = float(v.depart_s)
            if not (0.0 <= t <= self.horizon_s):
                raise ScenarioError(
                    f"vehicle {i}: depart_s={t} outside [0, {self.horizon_s}]"
                )
            vehicles.append(Vehicle(t, v.movement))
        vehicles.sort(key=lambda v: v.depart_s)  # stable: ties keep input order
        object.__setattr__(self, "horizon_s", float(self.horizon_s))
        object.__setattr__(self, "vehicles", tuple(vehicles))

    def __len__(self) -> int:
        return len(self.vehicles)

    def departures(self) -> np.ndarray:
        return np.fromiter((v.depart_s for v in self.vehicles), dtype=float, count=len(self.vehicles))

    def movement_indices(self) -> np.ndarray:
        return np.fromiter((_MOVEMENT_INDEX[v.movement] for v in self.vehicles), dtype=np.int64,
                           count=len(self.vehicles))

    def movement_counts(self) -> Dict[MovementId, int]:
        counts = np.bincount(self.movement_indices(), minlength=len(MOVEMENTS))
        return {m: int(c) for m, c in zip(MOVEMENTS, counts)}


@dataclass(frozen=True)
class Histogram:
    movement: MovementId
    bin_counts: Tuple[int, ...]
    bin_width_s: float

    @property
    def k(self) -> int:
        return len(self.bin_counts)

    @property
    def total(self) -> int:
        return sum(self.bin_counts)


@dataclass(frozen=True)
class ScenarioSignature:
    """All twelve movement histograms of a scenario; zero-filled where there is no demand."""

    scenario_id: str
    horizon_s: float
    k: int
    histograms: Mapping[MovementId, Histogram] = field(repr=False)

    @property
    def bin_width_s(self) -> float:
        return self.horizon_s / self.k

    @property
    def total(self) -> int:
        return sum(h.total for h in self.histograms.values())

    def as_array(self) -> np.ndarray:
        """Counts as a (12, k) integer array in canonical movement order."""
        return np.array([self.histograms[m].bin_counts for m in MOVEMENTS], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "horizon_s": self.horizon_s,
            "k": self.k,
            "bin_width_s": self.bin_width_s,
            "histograms": {str(m): list(self.histograms[m].bin_counts) for m in MOVEMENTS},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_signature(scenario: Scenario, k: int = DEFAULT_K) -> ScenarioSignature:
    """Bin every vehicle into ``floor(t / width)`` with ``t == horizon`` clamped into the last bin."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    width = scenario.horizon_s / k
    counts = np.zeros((len(MOVEMENTS), k), dtype=np.int64)
    for i, v in enumerate(scenario.vehicles):
        if not (0.0 <= v.depart_s <= scenario.horizon_s):
            raise ScenarioError(f"vehicle {i}: depart_s={v.depart_s} outside horizon")
        b = min(int(v.depart_s // width), k - 1)
        counts[_MOVEMENT_INDEX[v.movement], b] += 1
    hists = {
        m: Histogram(m, tuple(int(c) for c in counts[i]), width)
        for i, m in enumerate(MOVEMENTS)
    }
    return ScenarioSignature(scenario.id, scenario.horizon_s, k, hists)


# -- scenario JSON ---------------------------------------------------------

def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "id": scenario.id,
        "horizon_s": scenario.horizon_s,
        "vehicles": [
            {"depart_s": v.depart_s, "movement": str(v.movement)} for v in scenario.vehicles
        ],
    }


def scenario_from_dict(data: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    for key in ("id", "horizon_s", "vehicles"):
        if key not in data:
            raise ScenarioError(f"{source}: missing field {key!r}")
    if not isinstance(data["id"], str):
        raise ScenarioError(f"{source}: field 'id' must be a string")
    horizon = data["horizon_s"]
    if isinstance(horizon, bool) or not isinstance(horizon, (int, float)) or not horizon > 0:
        raise ScenarioError(f"{source}: field 'horizon_s' must be a positive number")
    if not isinstance(data["vehicles"], list):
        raise ScenarioError(f"{source}: field 'vehicles' must be an array")
    vehicles = []
    for i, item in enumerate(data["vehicles"]):
        where = f"{source}: vehicles[{i}]"
        if not isinstance(item, dict) or "depart_s" not in item or "movement" not in item:
            raise ScenarioError(f"{where}: expected object with 'depart_s' and 'movement'")
        t = item["depart_s"]
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            raise ScenarioError(f"{where}.depart_s: not a number")
        if not (0 <= t <= horizon):
            raise ScenarioError(f"{where}.depart_s: {t} outside [0, {horizon}]")
        try:
            m = MovementId.parse(item["movement"])
        except ScenarioError as exc:
            raise ScenarioError(f"{where}.movement: {exc}") from None
        vehicles.append(Vehicle(float(t), m))
    return Scenario(data["id"], float(horizon), tuple(vehicles))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data, source=str(path))


def dump_scenario(scenario: Scenario) -> str:
    # one vehicle per line keeps diffs of generated suites readable
    head = json.dumps(scenario.id)
    lines = [
        "{",
        f'  "id": {head},',
        f'  "horizon_s": {json.dumps(scenario.horizon_s)},',
    ]
    if not scenario.vehicles:
        lines.append('  "vehicles": []')
    else:
        lines.append('  "vehicles": [')
        body = [
            f'    {{"depart_s": {json.dumps(v.depart_s)}, "movement": "{v.movement}"}}'
            for v in scenario.vehicles
        ]
        lines.append(",\n".join(body))
        lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_scenario(scenario: Scenario, path) -> None:
    path = Path(path)
    try:
        path.write_text(dump_scenario(scenario), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write scenario to {path}: {exc.strerror}") from exc


# -- SUMO route files ------------------------------------------------------

def load_edge_map(path) -> Dict[Tuple[str, str], MovementId]:
    """Read a ``{"from_edge to_edge": "N_T", ...}`` sidecar."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return parse_edge_map(raw)


def parse_edge_map(raw: Mapping[str, str]) -> Dict[Tuple[str, str], MovementId]:
    out = {}
    for key, token in raw.items():
        parts = key.split()
        if len(parts) != 2:
            raise ScenarioError(f"edge map key {key!r} must be 'from_edge to_edge'")
        out[(parts[0], parts[1])] = MovementId.parse(token)
    return out


def import_sumo_routes(path, edge_map: Mapping[Tuple[str, str], MovementId],
                       horizon_s: float, scenario_id: str | None = None) -> Scenario:
    """Build a scenario from a SUMO ``.rou.xml`` file.

    Each ``<vehicle>`` needs a numeric ``depart`` and either a child
    ``<route edges="...">`` or a ``route="id"`` reference to a top-level
    ``<route>``.  The movement is looked up from the first and last edge.
    """
    path = Path(path)
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise ScenarioError(f"{path}: malformed XML: {exc}") from exc
    named_routes = {r.get("id"): r.get("edges", "") for r in root.findall("route") if r.get("id")}
    vehicles: List[Vehicle] = []
    for i, veh in enumerate(root.iter("vehicle")):
        vid = veh.get("id", str(i))
        try:
            depart = float(veh.get("depart"))
        except (TypeError, ValueError):
            raise ScenarioError(f"{path}: vehicle {vid!r} has non-numeric depart {veh.get('depart')!r}") from None
        route = veh.find("route")
        if route is not None:
            edges = route.get("edges", "").split()
        elif veh.get("route") in named_routes:
            edges = named_routes[veh.get("route")].split()
        else:
            raise ScenarioError(f"{path}: vehicle {vid!r} has no route")
        if not edges:
            raise ScenarioError(f"{path}: vehicle {vid!r} has an empty edge list")
        pair = (edges[0], edges[-1])
        if pair not in edge_map:
            raise ScenarioError(f"{path}: vehicle {vid!r}: unmapped edge pair {pair[0]!r} -> {pair[1]!r}")
        if not (0.0 <= depart <= horizon_s):
            raise ScenarioError(f"{path}: vehicle {vid!r}: depart {depart} outside [0, {horizon_s}]")
        vehicles.append(Vehicle(depart, edge_map[pair]))
    return Scenario(scenario_id or path.name.split(".")[0], horizon_s, tuple(vehicles))


def with_vehicles(scenario: Scenario, extra: Sequence[Vehicle]) -> Scenario:
    """Return a copy of ``scenario`` with ``extra`` vehicles added."""
    return Scenario(scenario.id, scenario.horizon_s, scenario.vehicles + tuple(extra))
