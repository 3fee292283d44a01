"""
One windy day on the congested 30-bus grid
==========================================

The 30-bus case gets a 120 MW wind farm at bus 8 and branch ratings cut to
70%.  Bus 6, the hub that ties the southern and northern parts together,
is prepared for splitting.  For the windiest day of the bundled series the
day-ahead plan of each mode is computed on the linearized model, checked
hour by hour with exact AC physics at the forecast, and redispatched
against the measured wind.

Run with ``python demos/03_congested_day.py`` (about a minute).
"""
from gridtopo.cases import bundled_series_path, windiest_day
from gridtopo.scenario import ingest_csv
from gridtopo.workflow import RunSpec, compare, run_modes

day = windiest_day(ingest_csv(bundled_series_path()))
spec = RunSpec(case="case30_congested", busbars=(6,), series="forecast", first_day=day, days=1)
reports = run_modes(spec, ["opf", "one", "limited:1", "hourly"])

for rep in reports:
    row = rep.days.iloc[0]
    print(f"{rep.name:<18} D-1 {row.d1_objective:9.2f}  AC {row.feasibility_cost:9.2f}  "
          f"redispatch {row.redispatch_cost:7.2f}  total {row.total:9.2f}  "
          f"actions {row.actions_ac}  fidelity slack {row.fidelity_slack:7.2f}")

print()
print(compare(reports, "forecast_opf")[["name", "total", "pct_vs_baseline"]].to_string(index=False))

# hour by hour for the hourly mode: the coupler status and the LPAC-to-AC gap
hourly = reports[-1]
plan = hourly.plans[day]
coupler = plan.switch_ids.index(min(plan.switch_ids))
hours = hourly.hours[day]
print("\nhour  cf    coupler  LPAC      AC        gap")
for t, h in hours.iterrows():
    gap = 100 * (h.feasibility_cost / h.lpac_objective - 1)
    print(f"{t:>4}  {h.cf_feasibility:.2f}  {int(plan.status[t, coupler]):>7}  "
          f"{h.lpac_objective:8.2f}  {h.feasibility_cost:8.2f}  {gap:5.2f}%")
