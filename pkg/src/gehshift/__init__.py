"""Demand-histogram scenario distances for traffic signal control, with a
cross-evaluation harness that tests how well they predict controller
degradation."""

__version__ = "0.1.0"

from .scenario_model import (  # noqa: E402
    MOVEMENTS,
    MovementId,
    Scenario,
    ScenarioSignature,
    Vehicle,
    build_signature,
    import_sumo_routes,
    load_scenario,
    save_scenario,
)
from .distance_metrics import (  # noqa: E402
    GehConfig,
    Metric,
    geh,
    histogram_distance,
    kl_hourly_distance,
    ks_hourly_distance,
    scenario_distance,
)
from .scenario_gen import GenSpec, SkewProfile, generate_scenario, generate_suite  # noqa: E402
from .intersection_sim import (  # noqa: E402
    ControllerConfig,
    ControllerKind,
    SimConfig,
    calibrate,
    default_scheme,
    simulate,
)
from .eval_harness import cross_evaluate, distance_matrix  # noqa: E402
from .stats_analysis import analyze, linfit, t_cdf  # noqa: E402

__all__ = [
    "MOVEMENTS", "MovementId", "Scenario", "ScenarioSignature", "Vehicle", "build_signature",
    "import_sumo_routes", "load_scenario", "save_scenario",
    "GehConfig", "Metric", "geh", "histogram_distance", "kl_hourly_distance", "ks_hourly_distance",
    "scenario_distance",
    "GenSpec", "SkewProfile", "generate_scenario", "generate_suite",
    "ControllerConfig", "ControllerKind", "SimConfig", "calibrate", "default_scheme", "simulate",
    "cross_evaluate", "distance_matrix",
    "analyze", "linfit", "t_cdf",
]
