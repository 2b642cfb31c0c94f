"""OLS regression with t-test p-values and the distance-vs-performance analyses."""

from __future__ import annotations

import functools
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "NumericError",
    "RegressionResult",
    "AnalysisReport",
    "betainc_regularized",
    "t_cdf",
    "t_ppf",
    "linfit",
    "analyze",
    "ALPHA",
]

ALPHA = 0.05
AVERAGE_BINS = 20
_BETA_TOL = 1e-12
_BETA_MAX_ITER = 300
# smallest positive p reported; a perfect fit has t = inf
_P_FLOOR = sys.float_info.min


class NumericError(ArithmeticError):
    pass


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_TOL:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: int) -> float:
    """Student t CDF via ``I_x(df/2, 1/2)`` with ``x = df / (df + t^2)``."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


@functools.lru_cache(maxsize=256)
def t_ppf(p: float, df: int) -> float:
    """Inverse of :func:`t_cdf` by bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while t_cdf(lo, df) > p:
        lo *= 2.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    slope_stderr: float
    n: int
    # (x, lower, upper) of the 95% confidence band of the mean response, one per input x
    ci95_band: Tuple[Tuple[float, float, float], ...] = field(repr=False)
    residual_std: float = 0.0
    x_mean: float = 0.0
    sxx: float = 0.0

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def band(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Lower/upper 95% band of the mean response at arbitrary ``x``."""
        x = np.asarray(x, dtype=float)
        tcrit = t_ppf(0.975, self.n - 2)
        half = tcrit * self.residual_std * np.sqrt(1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx)
        y = self.predict(x)
        return y - half, y + half

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def to_dict(self, with_band: bool = True) -> dict:
        d = {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
            "slope_stderr": self.slope_stderr,
            "n": self.n,
        }
        if with_band:
            d["ci95_band"] = [list(row) for row in self.ci95_band]
        return d


def linfit(xs: Sequence[float], ys: Sequence[float]) -> RegressionResult:
    """Ordinary least squares of ``ys`` on ``xs`` with a two-sided slope t-test."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d and of equal length")
    n = len(x)
    if n < 3:
        raise ValueError("linfit needs at least 3 points")
    x_mean = float(x.mean())
    y_mean = float(y.mean())
    dx = x - x_mean
    sxx = float(dx @ dx)
    if sxx == 0.0 or sxx <= 1e-300:
        raise ValueError("distance has no variance")
    slope = float(dx @ (y - y_mean)) / sxx
    intercept = y_mean - slope * x_mean
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    dy = y - y_mean
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        r2 = 0.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    df = n - 2
    s = math.sqrt(ss_res / df)
    stderr = s / math.sqrt(sxx)
    if slope == 0.0:
        p = 1.0
    elif stderr == 0.0:
        p = _P_FLOOR
    else:
        tstat = abs(slope / stderr)
        # 2 * (1 - t_cdf(|t|)) written as the tail itself to avoid cancellation
        p = betainc_regularized(df / 2.0, 0.5, df / (df + tstat * tstat))
        p = min(max(p, _P_FLOOR), 1.0)
    tcrit = t_ppf(0.975, df)
    half = tcrit * s * np.sqrt(1.0 / n + dx ** 2 / sxx)
    fit = intercept + slope * x
    band = tuple((float(xi), float(f - h), float(f + h)) for xi, f, h in zip(x, fit, half))
    return RegressionResult(slope, intercept, r2, p, stderr, n, band, s, x_mean, sxx)


@dataclass
class AveragedTrend:
    """Performance averaged over groups of equal (or binned) distance."""

    x: List[float]
    travel_time: List[float]
    throughput: List[float]
    counts: List[int]
    binned: bool
    travel_time_fit: Optional[RegressionResult]
    throughput_fit: Optional[RegressionResult]

    def to_dict(self) -> dict:
        return {
            "binned": self.binned,
            "groups": [
                {"distance": x, "mean_travel_time_s": tt, "mean_throughput_veh": tp, "count": c}
                for x, tt, tp, c in zip(self.x, self.travel_time, self.throughput, self.counts)
            ],
            "travel_time": self.travel_time_fit.to_dict(with_band=False) if self.travel_time_fit else None,
            "throughput": self.throughput_fit.to_dict(with_band=False) if self.throughput_fit else None,
        }


@dataclass
class AnalysisReport:
    metric: str
    controller_kind: str
    scenario_ids: List[str]
    per_training: Dict[str, Dict[str, RegressionResult]]
    averaged: AveragedTrend
    fraction_significant: float
    exclude_self: bool = False

    @property
    def mean_r_squared(self) -> float:
        return float(np.mean([r["travel_time"].r_squared for r in self.per_training.values()]))

    @property
    def positive_slope_fraction(self) -> float:
        rows = self.per_training.values()
        return sum(r["travel_time"].slope > 0 for r in rows) / len(self.per_training)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "controller_kind": self.controller_kind,
            "alpha": ALPHA,
            "exclude_self": self.exclude_self,
            "fraction_significant": self.fraction_significant,
            "mean_r_squared": self.mean_r_squared,
            "positive_slope_fraction": self.positive_slope_fraction,
            "per_training": {
                sid: {k: r.to_dict() for k, r in self.per_training[sid].items()}
                for sid in self.scenario_ids
            },
            "averaged": self.averaged.to_dict(),
        }

    def csv_rows(self) -> List[List]:
        rows = [["scenario_id", "slope", "r2", "p", "stderr"]]
        for sid in self.scenario_ids:
            r = self.per_training[sid]["travel_time"]
            rows.append([sid, r.slope, r.r_squared, r.p_value, r.slope_stderr])
        return rows


def _averaged(d: np.ndarray, tt: np.ndarray, tp: np.ndarray, binned: bool) -> AveragedTrend:
    x = d.ravel()
    tt = tt.ravel()
    tp = tp.ravel()
    if binned:
        lo, hi = float(x.min()), float(x.max())
        width = (hi - lo) / AVERAGE_BINS if hi > lo else 1.0
        idx = np.minimum(((x - lo) / width).astype(int), AVERAGE_BINS - 1)
        keys = sorted(set(idx.tolist()))
        centers = [lo + (k + 0.5) * width for k in keys]
        groups = [idx == k for k in keys]
    else:
        keys = sorted(set(x.tolist()))
        centers = [float(k) for k in keys]
        groups = [x == k for k in keys]
    mean_tt = [float(tt[g].mean()) for g in groups]
    mean_tp = [float(tp[g].mean()) for g in groups]
    counts = [int(g.sum()) for g in groups]
    fit_tt = fit_tp = None
    if len(centers) >= 3:
        fit_tt = linfit(centers, mean_tt)
        fit_tp = linfit(centers, mean_tp)
    return AveragedTrend(centers, mean_tt, mean_tp, counts, binned, fit_tt, fit_tp)


def analyze(distances, evals, exclude_self: bool = False) -> AnalysisReport:
    """Regress each training scenario's performance row against its distance row.

    ``distances`` is a :class:`~gehshift.eval_harness.DistanceMatrix` and
    ``evals`` an :class:`~gehshift.eval_harness.EvalMatrix`; both must list
    the same scenario ids in the same order.
    """
    ids_d = list(distances.scenario_ids)
    ids_e = list(evals.scenario_ids)
    if len(ids_d) != len(ids_e):
        raise ValueError(f"scenario count mismatch: distances has {len(ids_d)}, evals has {len(ids_e)}")
    for pos, (a, b) in enumerate(zip(ids_d, ids_e)):
        if a != b:
            raise ValueError(f"scenario id mismatch at position {pos}: {a!r} (distances) vs {b!r} (evals)")
    n = len(ids_d)
    if n < 3:
        raise ValueError("analysis needs at least 3 scenarios")
    d = np.asarray(distances.values, dtype=float)
    tt = np.asarray(evals.travel_time_s, dtype=float)
    tp = np.asarray(evals.throughput, dtype=float)
    metric = getattr(distances.metric, "value", str(distances.metric))
    kind = getattr(evals.controller_kind, "value", str(evals.controller_kind))

    per_training: Dict[str, Dict[str, RegressionResult]] = {}
    for i, sid in enumerate(ids_d):
        cols = [j for j in range(n) if not (exclude_self and j == i)]
        try:
            per_training[sid] = {
                "travel_time": linfit(d[i, cols], tt[i, cols]),
                "throughput": linfit(d[i, cols], tp[i, cols]),
            }
        except ValueError as exc:
            raise ValueError(f"training scenario {sid!r}: {exc}") from exc
    frac = sum(per_training[s]["travel_time"].p_value < ALPHA for s in ids_d) / n

    if exclude_self:
        mask = ~np.eye(n, dtype=bool)
        pooled = (d[mask], tt[mask], tp[mask])
    else:
        pooled = (d, tt, tp)
    # the GEH count is integer-valued and grouped exactly; real-valued metrics are binned
    averaged = _averaged(*pooled, binned=metric != "geh_threshold")
    return AnalysisReport(metric, kind, ids_d, per_training, averaged, frac, exclude_self)
