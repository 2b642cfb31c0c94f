import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from gehshift.distance_metrics import Metric
from gehshift.eval_harness import DistanceMatrix, EvalMatrix
from gehshift.intersection_sim import ControllerKind
from gehshift.stats_analysis import analyze, betainc_regularized, linfit, t_cdf, t_ppf


def normal_equation_oracle(x, y):
    X = np.column_stack([np.ones_like(x), x])
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    resid = y - X @ beta
    r2 = 1 - (resid @ resid) / np.sum((y - y.mean()) ** 2)
    return beta[1], beta[0], r2


def test_linfit_exact_line():
    r = linfit([0, 1, 2, 3], [1, 3, 5, 7])
    assert r.slope == pytest.approx(2.0) and r.intercept == pytest.approx(1.0)
    assert r.r_squared == 1.0
    assert r.p_value < 1e-10


def test_linfit_flat_response():
    r = linfit([0, 1, 2, 3], [4, 4, 4, 4])
    assert r.slope == 0 and r.r_squared == 0 and r.p_value == 1.0


def test_linfit_errors():
    with pytest.raises(ValueError, match="no variance"):
        linfit([2, 2, 2], [1, 2, 3])
    with pytest.raises(ValueError, match="at least 3"):
        linfit([1, 2], [1, 2])


def test_linfit_matches_normal_equations():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(3, 60))
        x = rng.normal(size=n) * rng.uniform(0.1, 50)
        y = rng.uniform(-5, 5) * x + rng.normal(size=n) * rng.uniform(0.1, 20)
        slope, icpt, r2 = normal_equation_oracle(x, y)
        r = linfit(x, y)
        assert r.slope == pytest.approx(slope, rel=1e-10)
        assert r.intercept == pytest.approx(icpt, rel=1e-10, abs=1e-10)
        assert r.r_squared == pytest.approx(r2, rel=1e-10)


def test_linfit_matches_scipy_linregress():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        x = rng.uniform(0, 20, n)
        y = 0.3 * x + rng.normal(size=n) * 3
        ref = stats.linregress(x, y)
        r = linfit(x, y)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)
        assert r.slope_stderr == pytest.approx(ref.stderr, rel=1e-10)


def test_confidence_band_contains_fit():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 10, 30)
    r = linfit(x, 2 * x + rng.normal(size=30))
    for xi, lo, hi in r.ci95_band:
        assert lo <= r.intercept + r.slope * xi <= hi
    lo, hi = r.band([r.x_mean])
    assert hi[0] - lo[0] == pytest.approx(2 * t_ppf(0.975, 28) * r.residual_std / math.sqrt(30))


def test_t_cdf_examples():
    assert t_cdf(0.0, 5) == 0.5
    p = 2 * (1 - t_cdf(2.086, 20))
    assert p == pytest.approx(0.050, abs=0.005)


@pytest.mark.parametrize("t", [-30.0, -2.5, -0.3, 0.0, 0.7, 1.0, 4.2, 100.0])
def test_t_cdf_cauchy(t):
    assert t_cdf(t, 1) == pytest.approx(0.5 + math.atan(t) / math.pi, abs=1e-9)


def test_t_cdf_and_ppf_match_scipy():
    for df in (1, 2, 3, 5, 10, 18, 30, 100):
        for t in (-6.0, -2.0, -0.5, 0.25, 1.0, 3.0, 8.0):
            assert t_cdf(t, df) == pytest.approx(stats.t.cdf(t, df), abs=1e-12)
        for p in (0.6, 0.9, 0.975, 0.995):
            assert t_ppf(p, df) == pytest.approx(stats.t.ppf(p, df), rel=1e-9)


def test_incomplete_beta_matches_scipy():
    for a, b, x in [(0.5, 0.5, 0.3), (5.0, 0.5, 0.9), (20.0, 0.5, 0.99), (2.0, 3.0, 0.01), (1.0, 1.0, 0.42)]:
        assert betainc_regularized(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-10)
    assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
    assert betainc_regularized(2.0, 3.0, 1.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.integers(1, 200))
def test_t_cdf_symmetric(t, df):
    assert t_cdf(t, df) + t_cdf(-t, df) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(0.001, 5), st.integers(1, 60))
def test_t_cdf_monotone(t, step, df):
    assert t_cdf(t + step, df) >= t_cdf(t, df)


datasets = st.integers(4, 25).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100), min_size=n, max_size=n, unique=True),
        st.lists(st.floats(-100, 100), min_size=n, max_size=n),
    )
)


@settings(max_examples=150, deadline=None)
@given(datasets, st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_linfit_shift_and_scale_invariance(data, shift, scale):
    x, y = (np.array(v) for v in data)
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    base = linfit(x, y)
    moved = linfit(x * scale + shift, y)
    assert moved.r_squared == pytest.approx(base.r_squared, abs=1e-8)
    assert moved.slope * scale == pytest.approx(base.slope, rel=1e-6, abs=1e-9)
    if base.p_value > 1e-12:
        assert moved.p_value == pytest.approx(base.p_value, rel=1e-5, abs=1e-12)


def _matrices(d, tt, tp=None, ids=None):
    n = len(d)
    ids = tuple(ids or (f"s{i:02d}" for i in range(n)))
    tp = np.zeros((n, n), dtype=np.int64) if tp is None else tp
    dm = DistanceMatrix(ids, Metric.GEH_THRESHOLD, np.asarray(d, dtype=float))
    em = EvalMatrix(ids, ControllerKind.FIXED_TIME, np.asarray(tt, dtype=float), tp, np.zeros((n, n), int))
    return dm, em


def test_planted_linear_signal():
    rng = np.random.default_rng(3)
    n = 8
    d = rng.integers(0, 20, size=(n, n)).astype(float)
    d = np.triu(d, 1) + np.triu(d, 1).T
    tt = 50 + 3 * d
    report = analyze(*_matrices(d, tt, tp=(1000 - 2 * d).astype(np.int64)))
    for sid in report.scenario_ids:
        r = report.per_training[sid]["travel_time"]
        assert r.slope == pytest.approx(3.0) and r.r_squared == pytest.approx(1.0)
    assert report.fraction_significant == 1.0
    assert report.positive_slope_fraction == 1.0
    assert report.averaged.travel_time_fit.slope == pytest.approx(3.0)
    assert report.averaged.throughput_fit.slope == pytest.approx(-2.0)
    assert not report.averaged.binned


def test_analyze_constant_distance_row():
    d = np.ones((4, 4)) - np.eye(4)
    with pytest.raises(ValueError, match="'s00': distance has no variance"):
        analyze(*_matrices(d, np.ones((4, 4))), exclude_self=True)


def test_analyze_id_mismatch():
    dm, _ = _matrices(np.zeros((3, 3)), np.zeros((3, 3)))
    _, em = _matrices(np.zeros((3, 3)), np.zeros((3, 3)), ids=["s00", "s02", "s01"])
    with pytest.raises(ValueError, match="position 1"):
        analyze(dm, em)


def test_exclude_self_drops_diagonal():
    rng = np.random.default_rng(5)
    n = 6
    d = rng.uniform(0, 10, size=(n, n))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    tt = rng.uniform(10, 90, size=(n, n))
    with_self = analyze(*_matrices(d, tt))
    without = analyze(*_matrices(d, tt), exclude_self=True)
    assert with_self.per_training["s00"]["travel_time"].n == n
    assert without.per_training["s00"]["travel_time"].n == n - 1
    assert without.exclude_self and not with_self.exclude_self


def test_binned_average_for_continuous_metrics():
    rng = np.random.default_rng(6)
    n = 10
    d = rng.uniform(0, 1, size=(n, n))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    dm, em = _matrices(d, 5 + 10 * d)
    dm = DistanceMatrix(dm.scenario_ids, Metric.KL_HOURLY, dm.values)
    report = analyze(dm, em)
    assert report.averaged.binned
    assert len(report.averaged.x) <= 20 and sum(report.averaged.counts) == n * n
