"""GEH statistic, thresholded GEH histogram distance and the hourly-volume baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict

import numpy as np

from .scenario_model import MOVEMENTS, Histogram, MovementId, ScenarioSignature

__all__ = [
    "Metric",
    "GehConfig",
    "ScenarioDistance",
    "geh",
    "histogram_distance",
    "scenario_distance",
    "kl_hourly_distance",
    "ks_hourly_distance",
    "compute_distance",
]


class Metric(str, Enum):
    GEH_THRESHOLD = "geh_threshold"
    KL_HOURLY = "kl_hourly"
    KS_HOURLY = "ks_hourly"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        aliases = {"geh": cls.GEH_THRESHOLD, "kl": cls.KL_HOURLY, "ks": cls.KS_HOURLY}
        if name in aliases:
            return aliases[name]
        return cls(name)


@dataclass(frozen=True)
class GehConfig:
    """Per-bin GEH test settings.

    The defaults compare raw bin counts with ``sqrt((a-b)^2 / (a+b))``;
    ``use_factor_two`` switches to the classic ``sqrt(2(a-b)^2 / (a+b))`` and
    ``rate_scale`` converts counts to veh/h (``* 3600 / bin_width``) first.
    """

    threshold: float = 5.0
    use_factor_two: bool = False
    rate_scale: bool = False

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "use_factor_two": self.use_factor_two,
                "rate_scale": self.rate_scale}


@dataclass(frozen=True)
class ScenarioDistance:
    metric: Metric
    value: float
    per_movement: Dict[MovementId, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "value": self.value,
            "per_movement": {str(m): self.per_movement[m] for m in MOVEMENTS if m in self.per_movement},
        }


def geh(a: float, b: float) -> float:
    """GEH statistic of two hourly flows; ``geh(0, 0) == 0``."""
    if a < 0 or b < 0:
        raise ValueError(f"flows must be non-negative, got ({a}, {b})")
    s = a + b
    if s == 0:
        return 0.0
    return math.sqrt(2.0 * (a - b) ** 2 / s)


def _bin_statistic(a: np.ndarray, b: np.ndarray, cfg: GehConfig, width_s: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cfg.rate_scale:
        scale = 3600.0 / width_s
        a = a * scale
        b = b * scale
    num = (a - b) ** 2
    if cfg.use_factor_two:
        num = 2.0 * num
    den = a + b
    out = np.zeros(np.broadcast(a, b).shape)
    np.divide(num, den, out=out, where=den > 0)
    return np.sqrt(out)


def _check_pair(ha: Histogram, hb: Histogram) -> None:
    if ha.movement != hb.movement:
        raise ValueError(f"movement mismatch: {ha.movement} vs {hb.movement}")
    if ha.k != hb.k:
        raise ValueError(f"bin count mismatch: {ha.k} vs {hb.k}")
    if not math.isclose(ha.bin_width_s, hb.bin_width_s, rel_tol=1e-12):
        raise ValueError(f"bin width mismatch: {ha.bin_width_s} vs {hb.bin_width_s}")


def histogram_distance(ha: Histogram, hb: Histogram, cfg: GehConfig = GehConfig()) -> int:
    """Number of bins whose per-bin GEH exceeds ``cfg.threshold``."""
    _check_pair(ha, hb)
    stat = _bin_statistic(ha.bin_counts, hb.bin_counts, cfg, ha.bin_width_s)
    return int(np.count_nonzero(stat > cfg.threshold))


def _check_signatures(sa: ScenarioSignature, sb: ScenarioSignature, need_k: bool = True) -> None:
    if need_k and sa.k != sb.k:
        raise ValueError(f"signatures {sa.scenario_id!r} and {sb.scenario_id!r} differ in k ({sa.k} vs {sb.k})")
    if not math.isclose(sa.horizon_s, sb.horizon_s, rel_tol=1e-12):
        raise ValueError(
            f"signatures {sa.scenario_id!r} and {sb.scenario_id!r} differ in horizon "
            f"({sa.horizon_s} vs {sb.horizon_s})"
        )


def scenario_distance(sa: ScenarioSignature, sb: ScenarioSignature,
                      cfg: GehConfig = GehConfig()) -> ScenarioDistance:
    """Sum of per-movement thresholded GEH distances."""
    _check_signatures(sa, sb)
    stat = _bin_statistic(sa.as_array(), sb.as_array(), cfg, sa.bin_width_s)
    per_row = np.count_nonzero(stat > cfg.threshold, axis=1)
    per_movement = {m: int(c) for m, c in zip(MOVEMENTS, per_row)}
    return ScenarioDistance(Metric.GEH_THRESHOLD, int(per_row.sum()), per_movement)


def _hourly_volumes(sig: ScenarioSignature) -> np.ndarray:
    return sig.as_array().sum(axis=1) * (3600.0 / sig.horizon_s)


def _kl_terms(sa: ScenarioSignature, sb: ScenarioSignature, epsilon: float) -> np.ndarray:
    _check_signatures(sa, sb, need_k=False)
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    p = _hourly_volumes(sa) + epsilon
    q = _hourly_volumes(sb) + epsilon
    p /= p.sum()
    q /= q.sum()
    # 0.5 * (P ln P/Q + Q ln Q/P), one non-negative term per movement
    return 0.5 * (p - q) * np.log(p / q)


def kl_hourly_distance(sa: ScenarioSignature, sb: ScenarioSignature, epsilon: float = 1e-9) -> float:
    """Symmetrised, epsilon-smoothed KL divergence (nats) of the movement volume shares."""
    return float(_kl_terms(sa, sb, epsilon).sum())


def _ks_gaps(sa: ScenarioSignature, sb: ScenarioSignature) -> np.ndarray:
    _check_signatures(sa, sb, need_k=False)
    va = _hourly_volumes(sa)
    vb = _hourly_volumes(sb)
    ta, tb = va.sum(), vb.sum()
    if ta == 0 and tb == 0:
        return np.zeros(len(MOVEMENTS))
    if ta == 0 or tb == 0:
        return np.ones(len(MOVEMENTS))
    return np.minimum(np.abs(np.cumsum(va / ta) - np.cumsum(vb / tb)), 1.0)


def ks_hourly_distance(sa: ScenarioSignature, sb: ScenarioSignature) -> float:
    """Largest gap between the cumulative movement-share distributions in canonical order.

    Two empty scenarios are at distance 0; one empty and one not at distance 1.
    """
    return float(_ks_gaps(sa, sb).max())


def compute_distance(sa: ScenarioSignature, sb: ScenarioSignature, metric: Metric,
                     cfg: GehConfig = GehConfig(), epsilon: float = 1e-9) -> ScenarioDistance:
    metric = Metric(metric)
    if metric is Metric.GEH_THRESHOLD:
        return scenario_distance(sa, sb, cfg)
    if metric is Metric.KL_HOURLY:
        terms = _kl_terms(sa, sb, epsilon)
        return ScenarioDistance(metric, float(terms.sum()), {m: float(t) for m, t in zip(MOVEMENTS, terms)})
    gaps = _ks_gaps(sa, sb)
    return ScenarioDistance(metric, float(gaps.max()), {m: float(g) for m, g in zip(MOVEMENTS, gaps)})
