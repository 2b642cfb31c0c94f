"""Point-queue simulation of a signalised four-leg intersection.

Each movement is a FIFO vertical queue at the stop bar.  Time advances in
fixed steps; each lane of a movement with green earns credit at
``1 / saturation_headway`` per second, and every whole unit of per-lane
credit releases up to one queued vehicle per lane.  Travel time is the wait from departure to
the stop-bar crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .scenario_model import MOVEMENTS, Approach, MovementId, Scenario, Turn

__all__ = [
    "ControllerKind",
    "Phase",
    "PhaseScheme",
    "ControllerConfig",
    "SimConfig",
    "SimOutcome",
    "SimTrace",
    "ConfigError",
    "default_scheme",
    "simulate",
    "simulate_trace",
    "calibrate",
    "conflicts",
]

CYCLE_S = 90.0
ACTUATED_MAX_FACTOR = 1.5
_EPS = 1e-9

# number of simulate() calls in this process; read by the harness tests
SIMULATE_CALLS = 0


class ConfigError(ValueError):
    pass


class ControllerKind(str, Enum):
    FIXED_TIME = "fixed_time"
    ACTUATED = "actuated"

    @classmethod
    def parse(cls, name: str) -> "ControllerKind":
        aliases = {"fixed": cls.FIXED_TIME, "fixedtime": cls.FIXED_TIME, "actuated": cls.ACTUATED}
        key = str(name).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


_OPPOSING = {Approach.N: Approach.S, Approach.S: Approach.N, Approach.E: Approach.W, Approach.W: Approach.E}


def conflicts(a: MovementId, b: MovementId) -> bool:
    """Fixed conflict table for protected-only phasing.

    Movements of the same approach never conflict.  Between opposing
    approaches only a left turn conflicts, with the opposing through and the
    opposing right (which share its exit).  Movements from perpendicular
    approaches always conflict.
    """
    if a.approach == b.approach:
        return False
    if _OPPOSING[a.approach] == b.approach:
        if a.turn is Turn.L:
            return b.turn is not Turn.L
        if b.turn is Turn.L:
            return True
        return False
    return True


@dataclass(frozen=True)
class Phase:
    id: int
    served_movements: FrozenSet[MovementId]
    min_green_s: float = 5.0
    max_green_s: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "served_movements", frozenset(self.served_movements))
        if not 0 < self.min_green_s <= self.max_green_s:
            raise ConfigError(f"phase {self.id}: need 0 < min_green_s <= max_green_s")
        if not self.served_movements:
            raise ConfigError(f"phase {self.id}: serves no movements")
        served = sorted(self.served_movements, key=lambda m: m.index)
        for i, a in enumerate(served):
            for b in served[i + 1:]:
                if conflicts(a, b):
                    raise ConfigError(f"phase {self.id}: {a} conflicts with {b}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "served_movements": [str(m) for m in MOVEMENTS if m in self.served_movements],
            "min_green_s": self.min_green_s,
            "max_green_s": self.max_green_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Phase":
        return cls(int(d["id"]), frozenset(MovementId.parse(s) for s in d["served_movements"]),
                   float(d.get("min_green_s", 5.0)), float(d.get("max_green_s", 60.0)))


@dataclass(frozen=True)
class PhaseScheme:
    phases: Tuple[Phase, ...]
    lost_time_s: float = 4.0
    # single-phase schemes are only for unit tests and need not cover all movements
    require_full_coverage: bool = True

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ConfigError("phase scheme has no phases")
        if self.lost_time_s < 0:
            raise ConfigError("lost_time_s must be >= 0")
        ids = [p.id for p in self.phases]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate phase ids")
        if self.require_full_coverage:
            covered = set().union(*(p.served_movements for p in self.phases))
            missing = [str(m) for m in MOVEMENTS if m not in covered]
            if missing:
                raise ConfigError(f"movements not served by any phase: {', '.join(missing)}")

    def phase(self, phase_id: int) -> Phase:
        for p in self.phases:
            if p.id == phase_id:
                return p
        raise KeyError(phase_id)

    def to_dict(self) -> dict:
        return {"lost_time_s": self.lost_time_s, "phases": [p.to_dict() for p in self.phases]}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseScheme":
        return cls(tuple(Phase.from_dict(p) for p in d["phases"]), float(d.get("lost_time_s", 4.0)))


def _mv(*names: str) -> FrozenSet[MovementId]:
    return frozenset(MovementId.parse(n) for n in names)


def default_scheme(min_green_s: float = 5.0, max_green_s: float = 60.0, lost_time_s: float = 4.0) -> PhaseScheme:
    return PhaseScheme(
        (
            Phase(1, _mv("N_T", "S_T", "N_R", "S_R"), min_green_s, max_green_s),
            Phase(2, _mv("N_L", "S_L"), min_green_s, max_green_s),
            Phase(3, _mv("E_T", "W_T", "E_R", "W_R"), min_green_s, max_green_s),
            Phase(4, _mv("E_L", "W_L"), min_green_s, max_green_s),
        ),
        lost_time_s,
    )


@dataclass(frozen=True)
class ControllerConfig:
    kind: ControllerKind
    phase_scheme: PhaseScheme = field(default_factory=default_scheme)
    splits_s: Mapping[int, float] = field(default_factory=dict)
    gap_s: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        object.__setattr__(self, "splits_s", {int(k): float(v) for k, v in self.splits_s.items()})
        if self.gap_s <= 0:
            raise ConfigError("gap_s must be > 0")
        if self.kind is ControllerKind.FIXED_TIME:
            for p in self.phase_scheme.phases:
                if p.id not in self.splits_s:
                    raise ConfigError(f"fixed-time controller lacks a split for phase {p.id}")
                g = self.splits_s[p.id]
                if not p.min_green_s - _EPS <= g <= p.max_green_s + _EPS:
                    raise ConfigError(
                        f"phase {p.id}: split {g} outside [{p.min_green_s}, {p.max_green_s}]"
                    )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "splits_s": {str(k): v for k, v in sorted(self.splits_s.items())},
            "gap_s": self.gap_s,
            "phase_scheme": self.phase_scheme.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        return cls(
            ControllerKind.parse(d["kind"]),
            PhaseScheme.from_dict(d["phase_scheme"]) if "phase_scheme" in d else default_scheme(),
            {int(k): float(v) for k, v in d.get("splits_s", {}).items()},
            float(d.get("gap_s", 3.0)),
        )


@dataclass(frozen=True)
class SimConfig:
    step_s: float = 1.0
    saturation_headway_s: float = 2.0
    flush_overtime_s: float = 1800.0
    left_turn_lanes: int = 1
    through_lanes: int = 1
    right_turn_lanes: int = 1

    def __post_init__(self):
        if not self.step_s > 0:
            raise ConfigError("step_s must be > 0")
        if not self.saturation_headway_s > 0:
            raise ConfigError("saturation_headway_s must be > 0")
        if self.flush_overtime_s < 0:
            raise ConfigError("flush_overtime_s must be >= 0")
        for name in ("left_turn_lanes", "through_lanes", "right_turn_lanes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def lanes(self, m: MovementId) -> int:
        return {Turn.L: self.left_turn_lanes, Turn.T: self.through_lanes, Turn.R: self.right_turn_lanes}[m.turn]

    def to_dict(self) -> dict:
        return {
            "step_s": self.step_s,
            "saturation_headway_s": self.saturation_headway_s,
            "flush_overtime_s": self.flush_overtime_s,
            "left_turn_lanes": self.left_turn_lanes,
            "through_lanes": self.through_lanes,
            "right_turn_lanes": self.right_turn_lanes,
        }


@dataclass(frozen=True)
class SimOutcome:
    avg_travel_time_s: float
    throughput_veh: int
    served_total: int
    unserved: int
    per_movement_delay: Dict[MovementId, float]

    def to_dict(self) -> dict:
        return {
            "avg_travel_time_s": self.avg_travel_time_s,
            "throughput_veh": self.throughput_veh,
            "served_total": self.served_total,
            "unserved": self.unserved,
            "per_movement_delay": {str(m): self.per_movement_delay[m] for m in MOVEMENTS},
        }


@dataclass
class SimTrace:
    """Per-vehicle detail of one run, for invariant checks."""

    # crossing times per movement, in service order (None-free; unserved vehicles absent)
    crossings: Dict[MovementId, List[float]]
    # (phase id, green start, green end, {movement: vehicles discharged})
    greens: List[Tuple[int, float, float, Dict[MovementId, int]]]


def simulate(scenario: Scenario, controller: ControllerConfig, sim: SimConfig = SimConfig()) -> SimOutcome:
    global SIMULATE_CALLS
    SIMULATE_CALLS += 1
    return _run(scenario, controller, sim, None)


def simulate_trace(scenario: Scenario, controller: ControllerConfig,
                   sim: SimConfig = SimConfig()) -> Tuple[SimOutcome, SimTrace]:
    trace = SimTrace({m: [] for m in MOVEMENTS}, [])
    outcome = _run(scenario, controller, sim, trace)
    return outcome, trace


def _run(scenario: Scenario, controller: ControllerConfig, sim: SimConfig,
         trace: Optional[SimTrace]) -> SimOutcome:
    n_mv = len(MOVEMENTS)
    scheme = controller.phase_scheme
    phases = scheme.phases
    n_ph = len(phases)
    served_idx = [tuple(sorted(m.index for m in p.served_movements)) for p in phases]
    actuated = controller.kind is ControllerKind.ACTUATED
    splits = [controller.splits_s.get(p.id, p.max_green_s) for p in phases]
    min_g = [p.min_green_s for p in phases]
    max_g = [p.max_green_s for p in phases]
    gap = controller.gap_s
    lost = scheme.lost_time_s

    dt = sim.step_s
    horizon = scenario.horizon_s
    t_end = horizon + sim.flush_overtime_s
    lanes = [sim.lanes(m) for m in MOVEMENTS]
    per_lane_rate = 1.0 / sim.saturation_headway_s

    vehicles = scenario.vehicles
    n_total = len(vehicles)
    g_depart = [v.depart_s for v in vehicles]
    g_move = [v.movement.index for v in vehicles]
    dep: List[List[float]] = [[] for _ in range(n_mv)]
    for t0, m in zip(g_depart, g_move):
        dep[m].append(t0)

    arrived = [0] * n_mv
    served = [0] * n_mv
    credit = [0.0] * n_mv  # per lane
    slots = [0] * n_mv  # earned but unused discharges
    last_arr = [-math.inf] * n_mv
    tt_sum = [0.0] * n_mv
    queued = 0
    ptr = 0
    throughput = 0

    # controller state: `cur` phase is green on [g_start, g_end); g_end may be inf
    cur = 0
    g_start = 0.0
    g_end = math.inf if n_ph == 1 else (math.inf if actuated else splits[0])
    green_served: Dict[int, int] = {}

    def close_green(end: float) -> None:
        if trace is not None:
            trace.greens.append(
                (phases[cur].id, g_start, end, {MOVEMENTS[k]: v for k, v in green_served.items()})
            )

    t = 0.0
    while t < t_end:
        while ptr < n_total and g_depart[ptr] <= t:
            m = g_move[ptr]
            arrived[m] += 1
            last_arr[m] = g_depart[ptr]
            queued += 1
            ptr += 1
        if ptr == n_total and queued == 0:
            break

        # phase change decisions are taken at step boundaries for actuated control
        if actuated and n_ph > 1 and t >= g_start:
            elapsed = t - g_start
            if elapsed >= min_g[cur] - _EPS:
                nxt = -1
                for off in range(1, n_ph):
                    j = (cur + off) % n_ph
                    for m in served_idx[j]:
                        if arrived[m] > served[m]:
                            nxt = j
                            break
                    if nxt >= 0:
                        break
                if nxt >= 0:
                    if elapsed >= max_g[cur] - _EPS:
                        stop = True
                    else:
                        stop = True
                        for m in served_idx[cur]:
                            if arrived[m] > served[m] or t - last_arr[m] <= gap:
                                stop = False
                                break
                    if stop:
                        close_green(t)
                        cur = nxt
                        g_start = t + lost
                        g_end = math.inf
                        green_served = {}
                        for m in served_idx[cur]:
                            credit[m] = 0.0
                            slots[m] = 0

        # fixed-time: roll over every interval that ended by t
        while not actuated and t >= g_end:
            close_green(g_end)
            nxt_start = g_end + lost
            cur = (cur + 1) % n_ph
            g_start = nxt_start
            g_end = nxt_start + splits[cur]
            green_served = {}
            for m in served_idx[cur]:
                credit[m] = 0.0
                slots[m] = 0

        t_next = t + dt
        lo = t if t > g_start else g_start
        hi = t_next if t_next < g_end else g_end
        if hi > lo:
            frac = (hi - lo) / dt
            for m in served_idx[cur]:
                c = credit[m] + per_lane_rate * dt * frac
                whole = int(c + _EPS)
                c = max(c - whole, 0.0)
                avail = slots[m] + whole * lanes[m]
                q = arrived[m] - served[m]
                n = avail if avail < q else q
                if n:
                    k = served[m]
                    dm = dep[m]
                    for i in range(k, k + n):
                        tt_sum[m] += t_next - dm[i]
                    served[m] = k + n
                    queued -= n
                    if t_next <= horizon:
                        throughput += n
                    if trace is not None:
                        trace.crossings[MOVEMENTS[m]].extend([t_next] * n)
                        green_served[m] = green_served.get(m, 0) + n
                avail -= n
                if n == q and avail >= lanes[m]:
                    # an idle movement banks at most one vehicle per lane
                    avail = lanes[m]
                    c = 0.0
                slots[m] = avail
                credit[m] = c
        t = t_next

    if trace is not None:
        close_green(min(t, g_end))

    served_total = sum(served)
    per_delay = {
        MOVEMENTS[m]: (tt_sum[m] / served[m] if served[m] else 0.0) for m in range(n_mv)
    }
    avg = sum(tt_sum) / served_total if served_total else 0.0
    return SimOutcome(avg, throughput, served_total, n_total - served_total, per_delay)


# -- calibration -----------------------------------------------------------

def _critical_volumes(scenario: Scenario, scheme: PhaseScheme, sim: SimConfig) -> List[float]:
    counts = scenario.movement_counts()
    scale = 3600.0 / scenario.horizon_s
    return [
        max(counts[m] * scale / sim.lanes(m) for m in p.served_movements)
        for p in scheme.phases
    ]


def _allocate(volumes: List[float], available: float, lo: List[float], hi: List[float]) -> List[float]:
    """Proportional split of ``available`` seconds with bound clipping.

    Phases whose proportional share falls outside their bounds are pinned to
    the bound and the rest is re-shared among the others until no share
    violates a bound.  If every phase ends up pinned the total may differ
    from ``available``.
    """
    n = len(volumes)
    alloc: Dict[int, float] = {}
    free = list(range(n))
    while free:
        remaining = available - sum(alloc.values())
        vsum = sum(volumes[i] for i in free)
        shares = {
            i: (remaining * volumes[i] / vsum if vsum > 0 else remaining / len(free)) for i in free
        }
        pinned = {}
        for i, s in shares.items():
            if s < lo[i]:
                pinned[i] = lo[i]
            elif s > hi[i]:
                pinned[i] = hi[i]
        if not pinned:
            alloc.update(shares)
            break
        alloc.update(pinned)
        free = [i for i in free if i not in pinned]
    return [alloc[i] for i in range(n)]


def calibrate(scenario: Scenario, kind: ControllerKind, scheme: Optional[PhaseScheme] = None,
              sim: SimConfig = SimConfig(), gap_s: float = 3.0) -> ControllerConfig:
    """Tune a controller to one scenario's movement volumes.

    Fixed-time greens are proportional to each phase's critical per-lane
    hourly volume over a 90 s cycle net of lost time.  Actuated control keeps
    the scheme's minimum greens and caps each phase at 1.5x its fixed-time
    split.
    """
    if len(scenario) == 0:
        raise ValueError(f"cannot calibrate on empty scenario {scenario.id!r}")
    kind = ControllerKind(kind)
    scheme = scheme or default_scheme()
    vols = _critical_volumes(scenario, scheme, sim)
    available = CYCLE_S - len(scheme.phases) * scheme.lost_time_s
    greens = _allocate(
        vols, available, [p.min_green_s for p in scheme.phases], [p.max_green_s for p in scheme.phases]
    )
    splits = {p.id: g for p, g in zip(scheme.phases, greens)}
    if kind is ControllerKind.FIXED_TIME:
        return ControllerConfig(kind, scheme, splits, gap_s)
    phases = tuple(
        replace(p, max_green_s=min(max(ACTUATED_MAX_FACTOR * splits[p.id], p.min_green_s), p.max_green_s))
        for p in scheme.phases
    )
    return ControllerConfig(kind, replace(scheme, phases=phases), splits, gap_s)
