"""
Weighted wind scenarios from forecast errors
============================================

The bundled series holds 14 days of quarter-hourly measured output and
day-ahead forecasts of a wind fleet.  Forecast errors are fitted twice,
by a Laplace law and by a Gaussian kernel density.  For each hour, errors
drawn from the Laplace law are added to the forecast, clipped to the unit
interval and clustered into k scenarios.  Each scenario is weighted by the
kernel density at its error.

Run with ``python demos/02_wind_scenarios.py``.
"""
import numpy as np

from gridtopo.cases import bundled_series_path, windiest_day
from gridtopo.scenario import ErrorDistribution, generate_scenarios, ingest_csv

ts = ingest_csv(bundled_series_path())
print(f"{len(ts)} hours from {ts.timestamps[0]} to {ts.timestamps[-1]}")

err = ts.errors
dist = ErrorDistribution.fit(err)
print(f"errors: mean {err.mean():+.4f}, std {err.std():.4f}")
print(f"Laplace fit: location {dist.laplace_mu:+.4f}, scale {dist.laplace_b:.4f}")
print(f"kernel bandwidth (Silverman): {dist.kde_bandwidth:.4f}")

# the empirical histogram, the kernel density and the Laplace law side by side
summary = dist.summary_frame()
print(summary.iloc[:: max(1, len(summary) // 8)].to_string(index=False))

# six scenarios for the windiest day
day = windiest_day(ts)
part = ts.slice(24 * day, 24 * (day + 1))
scen = generate_scenarios(part, 6, 20_000, seed=24 * day, errors=dist)
print(f"\nday {day}: forecast mean {part.forecast.mean():.3f}")
for t in range(0, 24, 6):
    vals = ", ".join(f"{v:.3f}@{p:.2f}" for v, p in zip(scen.values[t], scen.probs[t]))
    print(f"  hour {t:>2}: forecast {part.forecast[t]:.3f} -> {vals}")
print(f"probabilities sum to one: {np.allclose(scen.probs.sum(axis=1), 1.0)}")
