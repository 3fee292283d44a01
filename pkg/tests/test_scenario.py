"""Forecast-error statistics, k-means and scenario generation."""
from __future__ import annotations

import math
import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from sklearn.cluster import KMeans

from gridtopo.cases import bundled_series_path
from gridtopo.scenario import (MONITORED_CAPACITY_MW, ErrorDistribution, ScenarioError, ScenarioSet,
                               TimeSeries, fit_laplace, generate_scenarios, ingest_csv, kde_pdf,
                               kmeans, silverman_bandwidth)


def _write(tmp_path, text, name="wind.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _series(forecast, measured=None, start="2024-01-01"):
    forecast = np.asarray(forecast, float)
    measured = forecast if measured is None else np.asarray(measured, float)
    return TimeSeries(pd.date_range(start, periods=len(forecast), freq="h"), measured, forecast)


# -- ingestion ---------------------------------------------------------------------------------

def test_quarter_hours_average_to_one_hourly_value(tmp_path):
    p = _write(tmp_path, "timestamp,measured,forecast_d1_11am\n"
                         "2024-01-01 00:00,0.2,0.1\n2024-01-01 00:15,0.4,0.1\n"
                         "2024-01-01 00:30,0.6,0.1\n2024-01-01 00:45,0.8,0.1\n")
    ts = ingest_csv(p)
    assert len(ts) == 1
    assert ts.measured[0] == pytest.approx(0.5)


def test_bundled_fourteen_day_series_has_336_hours():
    ts = ingest_csv(bundled_series_path())
    assert len(ts) == 14 * 24
    assert len(ts.days()) == 14


def test_megawatt_values_are_divided_by_monitored_capacity(tmp_path):
    p = _write(tmp_path, "timestamp,measured,forecast\n2024-01-01 00:00,1130.5,2261\n")
    ts = ingest_csv(p, resample="none")
    assert MONITORED_CAPACITY_MW == 2261.0
    assert ts.measured[0] == pytest.approx(1130.5 / 2261)
    assert ts.forecast[0] == pytest.approx(1.0)


def test_header_capacity_overrides_default(tmp_path):
    p = _write(tmp_path, "# monitored_capacity_mw: 1000\n"
                         "timestamp,measured,forecast\n2024-01-01 00:00,500,250\n")
    ts = ingest_csv(p, resample="none")
    assert (ts.measured[0], ts.forecast[0]) == pytest.approx((0.5, 0.25))


def test_missing_column_is_reported(tmp_path):
    p = _write(tmp_path, "timestamp,measured\n2024-01-01 00:00,0.5\n")
    with pytest.raises(ScenarioError, match="forecast"):
        ingest_csv(p)


def test_rows_with_missing_values_are_skipped_and_counted(tmp_path):
    p = _write(tmp_path, "timestamp,measured,forecast\n2024-01-01 00:00,0.5,0.4\n"
                         "2024-01-01 01:00,,0.4\n2024-01-01 02:00,0.3,0.2\n")
    with pytest.warns(UserWarning, match="skipped 1"):
        ts = ingest_csv(p, resample="none")
    assert len(ts) == 2 and ts.n_skipped == 1


def test_time_series_invariants():
    with pytest.raises(ScenarioError):
        _series([0.5, 1.2])
    with pytest.raises(ScenarioError):
        TimeSeries(pd.DatetimeIndex(["2024-01-01 01:00", "2024-01-01 00:00"]), [0.1, 0.2], [0.1, 0.2])


# -- Laplace fit -------------------------------------------------------------------------------

def test_laplace_fit_closed_forms():
    assert fit_laplace([-1, 0, 1]) == pytest.approx((0.0, 2 / 3))
    assert fit_laplace([0, 0, 0, 3]) == pytest.approx((0.0, 0.75))


def test_laplace_fit_rejects_degenerate_samples():
    with pytest.raises(ScenarioError, match="degenerate"):
        fit_laplace([0.3, 0.3, 0.3])
    with pytest.raises(ScenarioError):
        fit_laplace([0.3])


def test_laplace_recovery_on_1e5_samples():
    x = np.random.default_rng(2024).laplace(0.02, 0.05, 100_000)
    mu, b = fit_laplace(x)
    assert abs(mu - 0.02) <= 0.002
    assert abs(b - 0.05) <= 0.002
    # independent maximum-likelihood fit
    loc, scale = stats.laplace.fit(x)
    assert (mu, b) == pytest.approx((loc, scale), abs=1e-9)


# -- kernel density ----------------------------------------------------------------------------

def test_kde_is_symmetric_for_a_symmetric_sample():
    x = np.array([-0.3, -0.1, 0.0, 0.1, 0.3])
    kde = kde_pdf(x, 0.1)
    grid = np.linspace(0, 1, 41)
    assert np.allclose(kde(grid), kde(-grid), atol=1e-12, rtol=0)


def test_kde_two_point_closed_form():
    h = 0.7
    kde = kde_pdf([-1.0, 1.0], h)
    expected = 2 * math.exp(-0.5 / h**2) / (2 * h * math.sqrt(2 * math.pi))
    assert kde(0.0) == pytest.approx(expected, rel=1e-12)


def test_kde_integrates_to_one():
    x = np.random.default_rng(1).laplace(0.0, 0.1, 2000)
    kde = kde_pdf(x)
    s = np.std(x)
    grid = np.linspace(x.min() - 6 * s, x.max() + 6 * s, 20001)
    assert abs(np.trapezoid(kde(grid), grid) - 1.0) <= 1e-3


def test_kde_matches_scipy_with_the_same_bandwidth():
    x = np.random.default_rng(3).normal(0.0, 0.2, 500)
    kde = kde_pdf(x)
    assert kde.bandwidth == pytest.approx(silverman_bandwidth(x))
    ref = stats.gaussian_kde(x, bw_method=kde.bandwidth / np.std(x, ddof=1))
    grid = np.linspace(-1, 1, 57)
    assert np.allclose(kde(grid), ref(grid), rtol=1e-10, atol=1e-12)


def test_kde_rejects_nonpositive_bandwidth():
    with pytest.raises(ScenarioError):
        kde_pdf([0.0, 1.0], 0.0)
    with pytest.raises(ScenarioError):
        kde_pdf([0.0, 1.0], -1.0)


def test_error_density_of_bundled_series_peaks_near_zero():
    ts = ingest_csv(bundled_series_path())
    dist = ErrorDistribution.fit(ts.errors)
    grid = np.linspace(-0.6, 0.6, 241)
    peak = grid[np.argmax(dist.kde(grid))]
    assert abs(peak) < 0.1
    summary = dist.summary_frame()
    assert {"empirical_density", "kde_density", "laplace_mu", "laplace_b"} <= set(summary.columns)


# -- k-means -----------------------------------------------------------------------------------

def _lloyd(x, c, max_iter=300):
    """Plain Lloyd iterations, lowest index on ties."""
    c = np.asarray(c, float).copy()
    labels = None
    for _ in range(max_iter):
        d = np.abs(x[:, None] - c[None, :])
        new = d.argmin(axis=1)
        if labels is not None and (new == labels).all():
            break
        labels = new
        for j in range(len(c)):
            if (labels == j).any():
                c[j] = x[labels == j].mean()
    return c, labels


def test_kmeans_matches_independent_oracles():
    x = np.clip(0.5 + np.random.default_rng(0).laplace(0.0, 0.1, 20_000), 0, 1)
    res = kmeans(x, 6, seed=11)
    c_ref, labels_ref = _lloyd(x, res.init)
    assert np.allclose(np.sort(res.centroids), np.sort(c_ref), atol=1e-9, rtol=0)
    assert (res.labels == labels_ref).all()
    km = KMeans(6, init=res.init.reshape(-1, 1), n_init=1, algorithm="lloyd", tol=0.0,
                max_iter=500).fit(x.reshape(-1, 1))
    assert np.allclose(np.sort(res.centroids), np.sort(km.cluster_centers_.ravel()), atol=1e-9, rtol=0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), k=st.integers(1, 8), n=st.integers(10, 400),
       scale=st.floats(0.01, 1.0))
def test_kmeans_fixed_point_and_monotone_wcss(seed, k, n, scale):
    x = np.random.default_rng(seed).laplace(0.0, scale, n)
    k = min(k, np.unique(x).size)
    res = kmeans(x, k, seed=seed)
    hist = np.array(res.wcss_history)
    assert (np.diff(hist) <= 1e-9 * max(1.0, hist[0])).all()
    # fixed point: every sample sits at its nearest centroid, centroids are cluster means
    d = np.abs(x[:, None] - res.centroids[None, :])
    assert np.allclose(d[np.arange(n), res.labels], d.min(axis=1), atol=1e-12)
    for j in np.unique(res.labels):
        assert res.centroids[j] == pytest.approx(x[res.labels == j].mean(), abs=1e-9)


def test_kmeans_is_deterministic_for_a_seed():
    x = np.random.default_rng(5).normal(size=1000)
    a, b = kmeans(x, 4, seed=9), kmeans(x, 4, seed=9)
    assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.labels, b.labels)


# -- scenarios ---------------------------------------------------------------------------------

def test_single_scenario_is_the_clamped_sample_mean():
    ts = _series([0.3, 0.95], [0.25, 0.9])
    dist = ErrorDistribution.fit(np.random.default_rng(0).laplace(0.0, 0.1, 500))
    scen = generate_scenarios(ts, 1, 5000, seed=4, errors=dist)
    for t in range(2):
        eps = np.random.default_rng(4 + t).laplace(dist.laplace_mu, dist.laplace_b, 5000)
        assert scen.values[t, 0] == pytest.approx(np.clip(ts.forecast[t] + eps, 0, 1).mean(), abs=1e-12)
        assert scen.probs[t, 0] == 1.0


def test_clamp_saturation_at_full_output():
    ts = _series([1.0])
    dist = ErrorDistribution(np.array([0.4, 0.5, 0.6]), 0.05, 0.5, 0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scen = generate_scenarios(ts, 4, 2000, seed=0, errors=dist)
    assert np.all(scen.values == 1.0)
    assert scen.probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_six_scenarios_match_an_independent_kmeans():
    ts = _series([0.5])
    dist = ErrorDistribution.fit(np.random.default_rng(8).laplace(0.0, 0.1, 5000))
    scen = generate_scenarios(ts, 6, 20_000, seed=3, errors=dist)
    eps = np.random.default_rng(3).laplace(dist.laplace_mu, dist.laplace_b, 20_000)
    x = np.clip(0.5 + eps, 0, 1)
    init = kmeans(x, 6, seed=3).init
    km = KMeans(6, init=init.reshape(-1, 1), n_init=1, algorithm="lloyd", tol=0.0,
                max_iter=500).fit(x.reshape(-1, 1))
    assert np.allclose(np.sort(scen.values[0]), np.sort(km.cluster_centers_.ravel()), atol=1e-9, rtol=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.sampled_from([1, 4, 6, 8]),
       forecast=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4))
def test_scenario_set_invariants(seed, k, forecast):
    ts = _series(forecast)
    dist = ErrorDistribution.fit(np.random.default_rng(seed).laplace(0.0, 0.08, 400))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scen = generate_scenarios(ts, k, 4000, seed=seed, errors=dist)
    assert scen.values.shape == (len(forecast), k)
    assert np.all(np.abs(scen.probs.sum(axis=1) - 1) <= 1e-9)
    assert np.all((scen.values >= 0) & (scen.values <= 1)) and np.all(scen.probs >= 0)
    for t, f in enumerate(forecast):
        live = scen.values[t][scen.probs[t] > 0]
        if k > 1 and 0.05 < f < 0.95:
            # samples of both signs exist, so the centroids bracket the forecast
            assert live.min() <= f <= live.max()


def test_generation_is_deterministic_and_round_trips(tmp_path):
    ts = ingest_csv(bundled_series_path()).slice(0, 24)
    a = generate_scenarios(ts, 8, 10_000, seed=7)
    b = generate_scenarios(ts, 8, 10_000, seed=7)
    assert a.to_csv() == b.to_csv()
    p = tmp_path / "s.csv"
    a.to_csv(p)
    back = ScenarioSet.from_csv(p)
    assert np.array_equal(back.values, a.values) and np.array_equal(back.probs, a.probs)


def test_scenario_set_validation():
    with pytest.raises(ScenarioError):
        ScenarioSet([[0.5, 0.6]], [[0.5, 0.4]])
    with pytest.raises(ScenarioError):
        ScenarioSet([[1.5]], [[1.0]])
    with pytest.raises(ScenarioError):
        generate_scenarios(_series([0.5]), 0)
    with pytest.raises(ScenarioError):
        generate_scenarios(_series([0.5]), 5, n_samples=3)
