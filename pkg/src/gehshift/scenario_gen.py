"""Seeded synthesis of random intersection scenarios.

Random numbers come from numpy's PCG64 bit generator, which produces the same
stream on every platform for a given seed.  Per-scenario seeds inside a suite
are derived with ``numpy.random.SeedSequence([base_seed, index])`` so that
scenario ``i`` does not depend on how many other scenarios are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Mapping, Optional

import numpy as np

from .scenario_model import MOVEMENTS, MovementId, Scenario, Vehicle

__all__ = ["GenSpec", "SkewProfile", "generate_scenario", "generate_suite", "scenario_seed"]

DIRICHLET_CONCENTRATION = 1.0


class SkewProfile(str, Enum):
    UNIFORM = "uniform"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class GenSpec:
    n_vehicles: int = 4000
    horizon_s: float = 3600.0
    movement_weights: Mapping[MovementId, float] = field(
        default_factory=lambda: {m: 1.0 for m in MOVEMENTS}
    )
    seed: int = 0

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles must be >= 1")
        if not self.horizon_s > 0:
            raise ValueError("horizon_s must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        w = self.weight_vector()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("movement weights must be finite and non-negative")
        if not w.sum() > 0:
            raise ValueError("at least one movement weight must be positive")

    def weight_vector(self) -> np.ndarray:
        return np.array([float(self.movement_weights.get(m, 0.0)) for m in MOVEMENTS])


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _draw_departures(rng: np.random.Generator, n: int, horizon_s: float) -> np.ndarray:
    return rng.uniform(0.0, horizon_s, size=n)


def generate_scenario(spec: GenSpec, id: str, departures: Optional[np.ndarray] = None) -> Scenario:
    """Draw ``spec.n_vehicles`` uniform departures and i.i.d. movements.

    ``departures`` may be supplied to reuse a fixed set of departure times;
    only the movement assignment is then random.
    """
    rng = _rng(spec.seed)
    if departures is None:
        departures = _draw_departures(rng, spec.n_vehicles, spec.horizon_s)
    elif len(departures) != spec.n_vehicles:
        raise ValueError("departures length must equal n_vehicles")
    w = spec.weight_vector()
    moves = rng.choice(len(MOVEMENTS), size=spec.n_vehicles, p=w / w.sum())
    order = np.argsort(departures, kind="stable")
    vehicles = tuple(Vehicle(float(departures[i]), MOVEMENTS[moves[i]]) for i in order)
    return Scenario(id, float(spec.horizon_s), vehicles)


def scenario_seed(base_seed: int, index: int) -> int:
    """64-bit generation seed of suite member ``index``."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, dtype=np.uint64)[0])


def _suite_weights(base_seed: int, index: int, profile: SkewProfile) -> dict:
    if profile is SkewProfile.UNIFORM:
        return {m: 1.0 for m in MOVEMENTS}
    rng = _rng(np.random.SeedSequence([base_seed, index, 1]))
    w = rng.dirichlet(np.full(len(MOVEMENTS), DIRICHLET_CONCENTRATION))
    return {m: float(x) for m, x in zip(MOVEMENTS, w)}


def generate_suite(base_seed: int, count: int, skew_profile: SkewProfile = SkewProfile.DIRICHLET,
                   n_vehicles: int = 4000, horizon_s: float = 3600.0,
                   freeze_departures: bool = False) -> List[Scenario]:
    """Generate ``count`` scenarios with ids ``s00``, ``s01``, ...

    With ``freeze_departures`` every scenario shares one set of departure
    times (drawn from ``SeedSequence([base_seed, 2**32])``) and differs only in
    the movement assignment.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    profile = SkewProfile(skew_profile)
    width = max(2, len(str(count - 1)))
    shared = None
    if freeze_departures:
        shared = _draw_departures(_rng(np.random.SeedSequence([base_seed, 2**32])), n_vehicles, horizon_s)
    suite = []
    for i in range(count):
        spec = GenSpec(n_vehicles, horizon_s, _suite_weights(base_seed, i, profile), scenario_seed(base_seed, i))
        suite.append(generate_scenario(spec, f"s{i:0{width}d}", departures=shared))
    return suite
