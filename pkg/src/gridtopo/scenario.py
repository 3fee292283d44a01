"""Wind forecast-error analysis and scenario generation.

Pipeline per timestep: draw errors from a Laplace distribution fitted to
historical ``measured - forecast`` errors, add them to the forecast, clamp
to the physical range [0, 1], cluster the clamped samples with 1-D k-means,
and weight each centroid by the kernel density of its error.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

MONITORED_CAPACITY_MW = 2261.0
PROB_TOL = 1e-9


class ScenarioError(ValueError):
    pass


# -- time series ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeSeries:
    timestamps: pd.DatetimeIndex
    measured: np.ndarray
    forecast: np.ndarray
    n_skipped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "timestamps", pd.DatetimeIndex(self.timestamps))
        object.__setattr__(self, "measured", np.asarray(self.measured, float))
        object.__setattr__(self, "forecast", np.asarray(self.forecast, float))
        n = len(self.timestamps)
        if len(self.measured) != n or len(self.forecast) != n:
            raise ScenarioError("timestamps, measured and forecast must have equal length")
        for arr, what in ((self.measured, "measured"), (self.forecast, "forecast")):
            if not np.all((arr >= 0) & (arr <= 1)):
                raise ScenarioError(f"{what} capacity factors must lie in [0, 1]")
        if n > 1 and not (np.diff(self.timestamps.asi8) > 0).all():
            raise ScenarioError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def errors(self) -> np.ndarray:
        return self.measured - self.forecast

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.timestamps[start:stop], self.measured[start:stop],
                          self.forecast[start:stop])

    def days(self) -> list["TimeSeries"]:
        return [self.slice(d * 24, d * 24 + 24) for d in range(len(self) // 24)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"timestamp": self.timestamps, "measured": self.measured,
                             "forecast": self.forecast})


_FORECAST_COLS = ("forecast", "forecast_d1_11am")


def _header_capacity(path: Path) -> float | None:
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                return None
            key, _, val = line[1:].partition(":")
            if not _:
                key, _, val = line[1:].partition("=")
            if key.strip().lower() in ("monitored_capacity_mw", "monitored_capacity"):
                return float(val)
    return None


def ingest_csv(path, resample: str = "hourly_mean", capacity_mw: float | None = None) -> TimeSeries:
    """Read ``timestamp,measured,forecast`` records into an hourly TimeSeries.

    Values above 1 are taken as MW and divided by the monitored capacity,
    which comes from ``capacity_mw``, a ``# monitored_capacity_mw: ...``
    header line, or a ``monitored_capacity`` column.  Rows with missing
    values are dropped; their count is stored in ``n_skipped``.
    """
    path = Path(path)
    if resample not in ("none", "hourly_mean"):
        raise ScenarioError(f"unknown resample mode {resample!r}")
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    df.columns = [c.strip() for c in df.columns]
    fc = next((c for c in _FORECAST_COLS if c in df.columns), None)
    missing = [c for c in ("timestamp", "measured") if c not in df.columns]
    if fc is None:
        missing.append("forecast")
    if missing:
        raise ScenarioError(f"{path}: missing column(s) {', '.join(missing)}")
    cap = capacity_mw or _header_capacity(path)
    if cap is None and "monitored_capacity" in df.columns:
        cap = df["monitored_capacity"]
    df = df.rename(columns={fc: "forecast"})
    meas = pd.to_numeric(df["measured"], errors="coerce")
    fcst = pd.to_numeric(df["forecast"], errors="coerce")
    ts = pd.to_datetime(df["timestamp"], errors="coerce")
    ok = meas.notna() & fcst.notna() & ts.notna()
    if isinstance(cap, pd.Series):
        cap = pd.to_numeric(cap, errors="coerce")
        ok &= cap.notna()
    n_skipped = int((~ok).sum())
    if n_skipped:
        warnings.warn(f"{path}: skipped {n_skipped} row(s) with missing values", stacklevel=2)
    if cap is None and ((meas[ok] > 1).any() or (fcst[ok] > 1).any()):
        cap = MONITORED_CAPACITY_MW
    frame = pd.DataFrame({"measured": meas, "forecast": fcst})
    if cap is not None:
        frame = frame.div(cap, axis=0) if isinstance(cap, pd.Series) else frame / float(cap)
    frame.index = ts
    frame = frame[ok.to_numpy()].sort_index()
    if resample == "hourly_mean":
        frame = frame.resample("h").mean().dropna()
    return TimeSeries(frame.index, frame["measured"].to_numpy(), frame["forecast"].to_numpy(),
                      n_skipped)


# -- error distribution ----------------------------------------------------------

def fit_laplace(errors) -> tuple[float, float]:
    """Maximum-likelihood Laplace fit: median and mean absolute deviation from it."""
    x = np.asarray(errors, float)
    if x.size < 2:
        raise ScenarioError("at least two samples are needed to fit a Laplace distribution")
    mu = float(np.median(x))
    b = float(np.mean(np.abs(x - mu)))
    if not b > 0:
        raise ScenarioError("degenerate error sample: all values identical, scale b = 0")
    return mu, b


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, float)
    sigma = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34) if q75 > q25 else sigma
    return 0.9 * spread * x.size ** (-0.2)


@dataclass(frozen=True, eq=False)
class Kde:
    """Gaussian kernel density estimate; call it like a function."""

    samples: np.ndarray
    bandwidth: float

    def __call__(self, x):
        x = np.asarray(x, float)
        flat = x.reshape(-1)
        out = np.empty(flat.shape)
        h = self.bandwidth
        norm = 1.0 / (self.samples.size * h * math.sqrt(2 * math.pi))
        for a in range(0, flat.size, 256):
            u = (flat[a:a + 256, None] - self.samples[None, :]) / h
            out[a:a + 256] = norm * np.exp(-0.5 * u * u).sum(axis=1)
        return out.reshape(x.shape) if x.ndim else float(out[0])


def kde_pdf(errors, bandwidth="auto") -> Kde:
    x = np.asarray(errors, float)
    if x.size < 2:
        raise ScenarioError("at least two samples are needed for a density estimate")
    h = silverman_bandwidth(x) if bandwidth in ("auto", None) else float(bandwidth)
    if not h > 0:
        raise ScenarioError(f"bandwidth must be positive, got {h}")
    return Kde(x.copy(), h)


@dataclass(frozen=True, eq=False)
class ErrorDistribution:
    samples: np.ndarray
    kde_bandwidth: float
    laplace_mu: float
    laplace_b: float

    @classmethod
    def fit(cls, errors, bandwidth="auto") -> "ErrorDistribution":
        x = np.asarray(errors, float)
        mu, b = fit_laplace(x)
        return cls(x, kde_pdf(x, bandwidth).bandwidth, mu, b)

    @property
    def kde(self) -> Kde:
        return Kde(self.samples, self.kde_bandwidth)

    def laplace_pdf(self, x):
        return np.exp(-np.abs(np.asarray(x, float) - self.laplace_mu) / self.laplace_b) / (2 * self.laplace_b)

    def summary_frame(self, bins: int = 50) -> pd.DataFrame:
        dens, edges = np.histogram(self.samples, bins=bins, density=True)
        mid = 0.5 * (edges[:-1] + edges[1:])
        return pd.DataFrame({
            "bin_left": edges[:-1], "bin_right": edges[1:], "empirical_density": dens,
            "kde_density": self.kde(mid), "laplace_density": self.laplace_pdf(mid),
            "laplace_mu": self.laplace_mu, "laplace_b": self.laplace_b,
            "kde_bandwidth": self.kde_bandwidth,
        })


# -- 1-D k-means ------------------------------------------------------------------

@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    wcss_history: list[float]
    init: np.ndarray
    n_iter: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.centroids))


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.size)]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        centers.append(x[min(idx, x.size - 1)])
        d2 = np.minimum(d2, (x - centers[-1]) ** 2)
    return np.asarray(centers, float)


def _segments(xs: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment of sorted samples as contiguous segments.

    Returns the centroid indices in ascending value order and the segment
    end positions, so that samples ``xs[ends[q-1]:ends[q]]`` belong to
    centroid ``owner[q]``.  Equidistant samples and duplicate centroids
    resolve to the lowest centroid index.
    """
    owner = np.lexsort((np.arange(len(c)), c))
    distinct = np.concatenate([[True], np.diff(c[owner]) > 0])
    owner = owner[distinct]
    cs = c[owner]
    ends = np.empty(len(owner), dtype=np.int64)
    for q in range(len(owner) - 1):
        side = "right" if owner[q] < owner[q + 1] else "left"
        ends[q] = np.searchsorted(xs, 0.5 * (cs[q] + cs[q + 1]), side=side)
    ends[-1] = xs.size
    return owner, ends


def kmeans(x, k: int, seed: int = 0, max_iter: int = 300, init=None) -> KMeansResult:
    """Lloyd's algorithm on 1-D data with k-means++ seeding.

    Iterates until the assignment no longer changes, so the result is a
    fixed point.  ``wcss_history[i]`` is the within-cluster sum of squares
    after the i-th assignment step.  Sorting once makes every cluster a
    contiguous run of samples, so each iteration costs O(k log n).
    """
    x = np.asarray(x, float).ravel()
    if k < 1:
        raise ScenarioError("k must be at least 1")
    if x.size < k:
        raise ScenarioError("fewer samples than clusters")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if init is not None:
        c = np.asarray(init, float).copy()
    else:
        c = kmeans_pp_init(xs, k, np.random.default_rng(seed))
    start = c.copy()
    k = len(c)
    s1 = np.concatenate([[0.0], np.cumsum(xs)])
    s2 = np.concatenate([[0.0], np.cumsum(xs * xs)])
    history: list[float] = []
    prev = None
    it = 0
    for it in range(1, max_iter + 1):
        owner, ends = _segments(xs, c)
        begins = np.concatenate([[0], ends[:-1]])
        n = (ends - begins).astype(float)
        sx = s1[ends] - s1[begins]
        sxx = s2[ends] - s2[begins]
        cc = c[owner]
        history.append(float(np.sum(sxx - 2 * cc * sx + n * cc * cc)))
        key = (owner.tobytes(), ends.tobytes())
        if key == prev:
            break
        prev = key
        c = c.copy()
        nz = n > 0
        c[owner[nz]] = sx[nz] / n[nz]
    labels_sorted = owner[np.searchsorted(ends, np.arange(xs.size), side="right")]
    labels = np.empty(xs.size, dtype=np.int64)
    labels[order] = labels_sorted
    return KMeansResult(c, labels, history, start, it)


# -- scenarios --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """``values[t, w]`` capacity factor with probability ``probs[t, w]``."""

    values: np.ndarray
    probs: np.ndarray
    timestamps: pd.DatetimeIndex | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, float))
        p = np.atleast_2d(np.asarray(self.probs, float))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        if v.shape != p.shape:
            raise ScenarioError("values and probabilities differ in shape")
        if not np.all((v >= 0) & (v <= 1)):
            raise ScenarioError("capacity factors must lie in [0, 1]")
        if (p < 0).any() or np.abs(p.sum(axis=1) - 1).max(initial=0) > PROB_TOL:
            raise ScenarioError("probabilities must be nonnegative and sum to 1 per timestep")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[1]

    @classmethod
    def deterministic(cls, cf, timestamps=None) -> "ScenarioSet":
        cf = np.asarray(cf, float).reshape(-1, 1)
        return cls(cf, np.ones_like(cf), timestamps)

    def slice(self, start: int, stop: int) -> "ScenarioSet":
        ts = self.timestamps[start:stop] if self.timestamps is not None else None
        return ScenarioSet(self.values[start:stop], self.probs[start:stop], ts, self.meta)

    def expected(self) -> np.ndarray:
        return (self.values * self.probs).sum(axis=1)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "w", "capacity_factor", "probability"])
        for t in range(self.horizon):
            for s in range(self.n_scenarios):
                w.writerow([t, s, repr(float(self.values[t, s])), repr(float(self.probs[t, s]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ScenarioSet":
        df = pd.read_csv(path, float_precision="round_trip")
        missing = {"t", "w", "capacity_factor", "probability"} - set(df.columns)
        if missing:
            raise ScenarioError(f"{path}: missing column(s) {sorted(missing)}")
        vals = df.pivot(index="t", columns="w", values="capacity_factor")
        probs = df.pivot(index="t", columns="w", values="probability")
        if vals.isna().any().any():
            raise ScenarioError(f"{path}: scenario count differs between timesteps")
        return cls(vals.to_numpy(), probs.to_numpy())


def generate_scenarios(ts: TimeSeries, k: int, n_samples: int = 100_000, seed: int = 0,
                       errors: ErrorDistribution | None = None) -> ScenarioSet:
    """Sample, clamp and cluster forecast errors into ``k`` weighted scenarios per hour.

    ``errors`` defaults to a fit on the series' own errors.  Timestep ``t``
    uses the random stream ``seed + t`` for both sampling and clustering.
    When fewer than ``k`` distinct clamped values exist, fewer clusters are
    formed and the row is padded with zero-probability copies of its first
    scenario so every timestep has ``k`` columns.
    """
    if k < 1:
        raise ScenarioError("k must be at least 1")
    if n_samples < k:
        raise ScenarioError("n_samples must be at least k")
    dist = errors or ErrorDistribution.fit(ts.errors)
    kde = dist.kde
    T = len(ts)
    values = np.empty((T, k))
    probs = np.empty((T, k))
    reduced = 0
    for t in range(T):
        rng = np.random.default_rng(seed + t)
        eps = rng.laplace(dist.laplace_mu, dist.laplace_b, n_samples)
        x = np.clip(ts.forecast[t] + eps, 0.0, 1.0)
        kk = min(k, np.unique(x).size)
        res = kmeans(x, kk, seed + t)
        sizes = res.sizes
        keep = sizes > 0
        cents = res.centroids[keep]
        dens = kde(cents - ts.forecast[t])
        w = dens / dens.sum() if dens.sum() > 0 else sizes[keep] / sizes[keep].sum()
        n = len(cents)
        if n < k:
            reduced += 1
        values[t, :n] = cents
        probs[t, :n] = w
        values[t, n:] = cents[0]
        probs[t, n:] = 0.0
    if reduced:
        warnings.warn(f"{reduced} timestep(s) had fewer than {k} distinct clusters", stacklevel=2)
    return ScenarioSet(np.clip(values, 0.0, 1.0), probs, ts.timestamps,
                       {"laplace_mu": dist.laplace_mu, "laplace_b": dist.laplace_b,
                        "kde_bandwidth": dist.kde_bandwidth, "seed": seed, "n_samples": n_samples})
