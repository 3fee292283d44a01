"""Day-by-day pipeline from day-ahead topology decision to measured-wind redispatch.

For every 24-hour day of a wind series:

1. the day-ahead (D-1) LPAC model is solved on the measured, forecast or
   scenario capacity factors and yields a :class:`TopologyPlan`;
2. each hour of that plan is checked with exact AC/DC physics on the
   forecast (``feasibility_opf``), which fixes the generator setpoints;
3. the setpoints are redispatched against the measured wind.

The stochastic dispatch of step 1 is discarded; only the topology carries
over.  Several modes can share one run of steps 1-3 through
:func:`run_modes`, which reuses the per-day LPAC cost table and the
per-hour AC results across modes.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import cases
from .acpf import PowerFlowError, feasibility_opf, redispatch
from .casefile import parse_case
from .lpac import (CostTable, Mode, ModelConfig, ModelError, ModelResult, TopologyPlan, build,
                   cost_table, solve_model)
from .mip import export_mps
from .network import Network
from .scenario import ErrorDistribution, ScenarioSet, TimeSeries, generate_scenarios, ingest_csv

HOURS_PER_DAY = 24
SERIES = ("measured", "forecast", "scenarios")
SCENARIO_COUNTS = (1, 4, 6, 8)
FIDELITY_MARGIN = 0.02
SOLUTION_KINDS = ("pg", "qg", "th", "ph", "z")

BUNDLED_CASES = {
    "case30": lambda: cases.load_case30(),
    "case30_congested": lambda: cases.congested_case30(),
    "case50": lambda: cases.load_case50(),
    "case50_modified": lambda: cases.modify_case50(cases.load_case50()),
}


class WorkflowError(ValueError):
    pass


# -- run specification --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    """Everything that determines a run.

    ``case`` is a bundled case name (see ``BUNDLED_CASES``) or a path to a
    MATPOWER-style file; ``timeseries`` is a wind CSV (default: the bundled
    14-day series).  ``series`` selects the D-1 input: ``measured``
    (perfect foresight), ``forecast`` or ``scenarios`` with ``k`` weighted
    scenarios per hour, or the fixed scenario file ``scenario_file`` if
    given.
    """

    case: str = "case30_congested"
    busbars: tuple[int, ...] = (cases.SPLIT_BUS_30,)
    timeseries: str | None = None
    days: int | None = None
    first_day: int = 0
    mode: str = "opf"
    series: str = "forecast"
    k: int = 6
    seed: int = 0
    gap: float = 1e-3
    n_samples: int = 100_000
    bandwidth: str | float = "auto"
    slack_multiplier: float = cases.SLACK_COST_MULTIPLIER
    cosine_cuts: int = 11
    cost_segments: int = 8
    method: str = "decompose"
    backend: str | None = None
    scenario_file: str | None = None
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "busbars", tuple(int(b) for b in self.busbars))
        if self.series not in SERIES:
            raise WorkflowError(f"series must be one of {SERIES}, got {self.series!r}")
        if self.series == "scenarios" and self.k not in SCENARIO_COUNTS:
            raise WorkflowError(f"scenario count must be one of {SCENARIO_COUNTS}")
        if not self.gap > 0:
            raise WorkflowError("gap must be positive")
        if self.days is not None and self.days < 1:
            raise WorkflowError("days must be at least 1")
        if self.first_day < 0:
            raise WorkflowError("first_day must be nonnegative")
        if self.method not in ("decompose", "mip"):
            raise WorkflowError("method must be 'decompose' or 'mip'")
        try:
            Mode.parse(self.mode)
        except ModelError as exc:
            raise WorkflowError(str(exc)) from exc

    @property
    def series_label(self) -> str:
        if self.series == "scenarios":
            return "scenarios" if self.scenario_file else f"scenarios{self.k}"
        return self.series

    @property
    def run_name(self) -> str:
        return self.name or f"{self.series_label}_{Mode.parse(self.mode).kind}" + (
            f"{Mode.parse(self.mode).s_max}" if Mode.parse(self.mode).kind == "limited" else "")

    def model_config(self, mode: str | None = None) -> ModelConfig:
        return ModelConfig(mode=Mode.parse(mode or self.mode), horizon=HOURS_PER_DAY,
                           cosine_cuts=self.cosine_cuts, cost_segments=self.cost_segments,
                           gap=self.gap)


def load_network(spec: RunSpec) -> Network:
    """The case of ``spec`` with slack recourse added and its busbars prepared for splitting."""
    if spec.case in BUNDLED_CASES:
        net = BUNDLED_CASES[spec.case]()
    else:
        path = Path(spec.case)
        if not path.exists():
            raise WorkflowError(f"case file {path} not found")
        net = parse_case(path)
    return cases.prepare_case(net, spec.busbars, spec.slack_multiplier)


def load_series(spec: RunSpec) -> TimeSeries:
    path = Path(spec.timeseries) if spec.timeseries else cases.bundled_series_path()
    if not path.exists():
        raise WorkflowError(f"series file {path} not found")
    return ingest_csv(path)


def day_range(spec: RunSpec, ts: TimeSeries) -> range:
    n = len(ts) // HOURS_PER_DAY
    last = n if spec.days is None else spec.first_day + spec.days
    if spec.first_day >= n or last > n:
        raise WorkflowError(f"the series holds {n} complete days; asked for days "
                            f"{spec.first_day}..{last - 1}")
    return range(spec.first_day, last)


def day_scenarios(spec: RunSpec, ts: TimeSeries, day: int,
                  errors: ErrorDistribution | None = None) -> ScenarioSet:
    """D-1 capacity factors of ``day`` for the run's series."""
    lo, hi = day * HOURS_PER_DAY, (day + 1) * HOURS_PER_DAY
    part = ts.slice(lo, hi)
    if spec.series == "measured":
        return ScenarioSet.deterministic(part.measured, part.timestamps)
    if spec.series == "forecast":
        return ScenarioSet.deterministic(part.forecast, part.timestamps)
    if spec.scenario_file:
        full = ScenarioSet.from_csv(spec.scenario_file)
        if full.horizon < hi:
            raise WorkflowError(f"scenario file covers {full.horizon} hours, day {day} needs {hi}")
        return full.slice(lo, hi)
    # one random stream per hour of the whole series
    return generate_scenarios(part, spec.k, spec.n_samples, spec.seed + lo, errors)


# -- results ------------------------------------------------------------------------------------

DAY_COLUMNS = ["day", "status", "d1_objective", "feasibility_cost", "redispatch_cost", "total",
               "actions_ac", "actions_dc", "fidelity_ok", "fidelity_slack", "message"]
TIMING_SCOPES = ("d1_day", "d1_hour", "feasibility_hour", "redispatch_hour")


@dataclass
class DayResult:
    day: int
    status: str  # ok | failed
    d1_objective: float
    plan: TopologyPlan | None
    hours: pd.DataFrame
    solution: pd.DataFrame | None = None
    d1_time: float = float("nan")
    d1_hour_times: list[float] = field(default_factory=list)
    message: str = ""

    def row(self) -> dict:
        h = self.hours
        ok = h["feasible"].all() if len(h) else False
        feas = float(h["feasibility_cost"].sum()) if ok else float("nan")
        red = float(h["redispatch_cost"].sum()) if ok else float("nan")
        counts = {s: (int(self.plan.action_count(s)) if self.plan is not None and s in self.plan.sides else 0)
                  for s in ("ac", "dc")}
        slack = float(h["fidelity_slack"].min()) if len(h) else float("nan")
        return {"day": self.day, "status": self.status, "d1_objective": self.d1_objective,
                "feasibility_cost": feas, "redispatch_cost": red, "total": feas + red,
                "actions_ac": counts["ac"], "actions_dc": counts["dc"],
                "fidelity_ok": bool(len(h) and h["fidelity_ok"].all()), "fidelity_slack": slack,
                "message": self.message}


@dataclass
class CostReport:
    """Per-day costs of one (series, mode) run plus solve timings.

    ``days`` holds one row per day (columns ``DAY_COLUMNS``); the D-1
    objective is the LPAC model value, ``total`` the exact-AC generation
    cost plus the redispatch cost.  ``fidelity_slack`` is the smallest
    margin by which an hour met the fidelity bound (negative: violated).
    """

    name: str
    series: str
    mode: str
    days: pd.DataFrame
    timings: pd.DataFrame
    plans: dict[int, TopologyPlan] = field(default_factory=dict, repr=False)
    hours: dict[int, pd.DataFrame] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> float:
        return float(self.days["total"].sum(min_count=1))

    @property
    def failed_days(self) -> list[int]:
        return [int(d) for d in self.days.loc[self.days["status"] != "ok", "day"]]

    @property
    def fidelity_ok(self) -> bool:
        return bool(self.days["fidelity_ok"].all())

    @property
    def ok(self) -> bool:
        return not self.failed_days and self.fidelity_ok

    def same_costs(self, other: "CostReport") -> bool:
        """True when every cost figure and plan agrees bit for bit (timings excluded)."""
        if not self.days.equals(other.days) or self.plans.keys() != other.plans.keys():
            return False
        return all(np.array_equal(p.status, other.plans[d].status) for d, p in self.plans.items())

    def save(self, root) -> Path:
        out = Path(root) / self.name
        out.mkdir(parents=True, exist_ok=True)
        self.days.to_csv(out / "report.csv", index=False)
        self.timings.to_csv(out / "timings.csv", index=False)
        (out / "run.json").write_text(json.dumps({"name": self.name, "series": self.series,
                                                  "mode": self.mode}, indent=1))
        for d, plan in self.plans.items():
            ddir = out / f"day_{d}"
            ddir.mkdir(exist_ok=True)
            plan.to_frame().to_csv(ddir / "topology.csv", index=False)
        for d, hours in self.hours.items():
            ddir = out / f"day_{d}"
            ddir.mkdir(exist_ok=True)
            hours.to_csv(ddir / "hours.csv", index=False)
        return out

    @classmethod
    def load(cls, path) -> "CostReport":
        path = Path(path)
        if not (path / "report.csv").exists():
            raise WorkflowError(f"no report.csv in {path}")
        meta = json.loads((path / "run.json").read_text()) if (path / "run.json").exists() else {}
        days = pd.read_csv(path / "report.csv", keep_default_na=True, float_precision="round_trip")
        days["message"] = days["message"].fillna("").astype(str)
        timings = pd.DataFrame()
        if (path / "timings.csv").exists():
            timings = pd.read_csv(path / "timings.csv", float_precision="round_trip")
        return cls(meta.get("name", path.name), meta.get("series", ""), meta.get("mode", ""),
                   days, timings)


def _timings(results: list[DayResult]) -> pd.DataFrame:
    samples = {
        "d1_day": [r.d1_time for r in results],
        "d1_hour": [t for r in results for t in r.d1_hour_times],
        "feasibility_hour": [t for r in results for t in r.hours.get("feasibility_s", [])],
        "redispatch_hour": [t for r in results for t in r.hours.get("redispatch_s", [])],
    }
    rows = []
    for scope in TIMING_SCOPES:
        v = np.array([x for x in samples[scope] if np.isfinite(x)], float)
        rows.append({"scope": scope, "n": len(v),
                     "avg_s": v.mean() if len(v) else np.nan,
                     "min_s": v.min() if len(v) else np.nan,
                     "max_s": v.max() if len(v) else np.nan})
    return pd.DataFrame(rows)


# -- one day ------------------------------------------------------------------------------------

def _hour(net: Network, status: np.ndarray, cf_feas: float, cf_meas: float, backend, cfg) -> dict:
    """Exact-AC feasibility on ``cf_feas`` then redispatch on ``cf_meas`` for one hour."""
    ids = tuple(s.id for s in net.switches)
    plan = TopologyPlan(ids, status[None, :], tuple(s.side for s in net.switches))
    row = {"feasible": False, "optimal": False, "lpac_objective": np.nan, "lpac_bound": np.nan,
           "feasibility_cost": np.nan, "redispatch_cost": np.nan, "wind_shortfall": np.nan,
           "fidelity_ok": False, "fidelity_slack": np.nan, "feasibility_s": np.nan,
           "redispatch_s": np.nan, "message": ""}
    t0 = time.perf_counter()
    try:
        sp, rep = feasibility_opf(net, plan, cf_feas, backend, cfg=cfg)
    except PowerFlowError as exc:
        row["message"] = f"feasibility: {exc}"
        row["feasibility_s"] = time.perf_counter() - t0
        return row
    row["feasibility_s"] = time.perf_counter() - t0
    lp = rep.lpac_objective
    slack = rep.lpac_bound + FIDELITY_MARGIN * abs(lp) - (rep.generation_cost - lp)
    row.update(optimal=rep.optimal, lpac_objective=lp, lpac_bound=rep.lpac_bound,
               feasibility_cost=rep.generation_cost, fidelity_slack=slack,
               fidelity_ok=bool(slack >= 0))
    if not rep.feasible:
        row["message"] = "feasibility: " + "; ".join(
            f"{v.element} {v.quantity} {v.amount:.2e}" for v in rep.violations[:3]) if rep.violations \
            else f"feasibility: mismatch {rep.mismatch:.1e}"
        return row
    t0 = time.perf_counter()
    try:
        rd = redispatch(net, plan, sp, cf_meas, cf_feas, backend)
    except PowerFlowError as exc:
        row["message"] = f"redispatch: {exc}"
        row["redispatch_s"] = time.perf_counter() - t0
        return row
    row["redispatch_s"] = time.perf_counter() - t0
    row.update(redispatch_cost=rd.redispatch_cost, wind_shortfall=rd.wind_shortfall)
    if not rd.report.feasible:
        row["message"] = "redispatch: infeasible under measured wind"
        return row
    row["feasible"] = True
    return row


def _solution_frame(res: ModelResult) -> pd.DataFrame:
    recs = []
    for sol, layout in zip(res.solutions, res.layouts):
        for key, j in layout.index.items():
            if key[0] in SOLUTION_KINDS:
                w = key[3] if len(key) == 4 else -1
                recs.append((key[0], key[1], key[2], w, float(sol.x[j])))
    df = pd.DataFrame(recs, columns=["kind", "entity", "t", "w", "value"])
    return df.sort_values(["t", "w", "kind", "entity"], kind="stable").reset_index(drop=True)


def _run_day(net: Network, spec: RunSpec, modes: list[str], ts: TimeSeries, day: int,
             errors: ErrorDistribution | None, keep_solution: bool) -> list[DayResult]:
    scen = day_scenarios(spec, ts, day, errors)
    lo = day * HOURS_PER_DAY
    meas = ts.measured[lo:lo + HOURS_PER_DAY]
    feas_cf = meas if spec.series == "measured" else ts.forecast[lo:lo + HOURS_PER_DAY]
    base_cfg = spec.model_config()
    table: CostTable | None = None
    ac_cache: dict[tuple, dict] = {}
    out = []
    for mode in modes:
        cfg = spec.model_config(mode)
        t0 = time.perf_counter()
        try:
            if spec.method == "decompose":
                if table is None:
                    table = cost_table(net, scen, base_cfg, spec.backend)
                res = solve_model(net, scen, cfg, spec.backend, method="decompose", table=table)
            else:
                res = solve_model(net, scen, cfg, spec.backend)
        except ModelError as exc:
            empty = pd.DataFrame(columns=["t", "feasible", "fidelity_ok", "fidelity_slack",
                                          "feasibility_cost", "redispatch_cost"])
            out.append(DayResult(day, "failed", float("nan"), None, empty,
                                 d1_time=time.perf_counter() - t0, message=f"D-1 model: {exc}"))
            continue
        d1_time = time.perf_counter() - t0  # the shared cost table is charged to the first mode
        rows = []
        for t in range(HOURS_PER_DAY):
            key = (res.plan.status[t].tobytes(), float(feas_cf[t]), float(meas[t]))
            if key not in ac_cache:
                ac_cache[key] = _hour(net, res.plan.status[t], float(feas_cf[t]), float(meas[t]),
                                      spec.backend, base_cfg)
            rows.append({"t": t, "cf_feasibility": float(feas_cf[t]), "cf_measured": float(meas[t]),
                         "d1_objective": float(res.solutions[t].objective)
                         if len(res.solutions) == HOURS_PER_DAY else float("nan"),
                         **ac_cache[key]})
        hours = pd.DataFrame(rows)
        failed = hours.loc[~hours["feasible"], "t"].tolist()
        msg = ""
        if failed:
            msg = f"hours {failed} failed: {hours.loc[~hours['feasible'], 'message'].iloc[0]}"
        out.append(DayResult(day, "failed" if failed else "ok", res.objective, res.plan, hours,
                             _solution_frame(res) if keep_solution else None, d1_time,
                             list(res.wall_times) if len(res.wall_times) == HOURS_PER_DAY else [],
                             msg))
    return out


# -- runs ---------------------------------------------------------------------------------------

def _assemble(spec: RunSpec, mode: str, results: list[DayResult]) -> CostReport:
    days = pd.DataFrame([r.row() for r in results], columns=DAY_COLUMNS)
    sp = replace(spec, mode=mode)
    return CostReport(sp.run_name, spec.series_label, mode, days, _timings(results),
                      {r.day: r.plan for r in results if r.plan is not None},
                      {r.day: r.hours for r in results})


def _write_day(root: Path, name: str, r: DayResult) -> None:
    ddir = root / name / f"day_{r.day}"
    ddir.mkdir(parents=True, exist_ok=True)
    if r.solution is not None:
        r.solution.to_csv(ddir / "solution.csv", index=False)


def export_models(spec: RunSpec, output_dir) -> list[Path]:
    """Write the D-1 model of every day as ``day_<d>/model.mps`` without solving anything."""
    net = load_network(spec)
    ts = load_series(spec)
    errors = ErrorDistribution.fit(ts.errors, spec.bandwidth) if spec.series == "scenarios" else None
    root = Path(output_dir) / spec.run_name
    paths = []
    for d in day_range(spec, ts):
        m, _ = build(net, day_scenarios(spec, ts, d, errors), spec.model_config())
        ddir = root / f"day_{d}"
        ddir.mkdir(parents=True, exist_ok=True)
        export_mps(m, ddir / "model.mps")
        paths.append(ddir / "model.mps")
    return paths


def run_modes(spec: RunSpec, modes: list[str] | None = None, output_dir=None, jobs: int = 1,
              write_mps: bool = False) -> list[CostReport]:
    """Run several modes on the same series, sharing LPAC tables and AC hour results.

    Returns one :class:`CostReport` per mode, in the given order.  With
    ``output_dir`` the results directory of every mode is written.  Days
    are independent and run in ``jobs`` worker processes; the reports do
    not depend on ``jobs``.
    """
    modes = list(modes or [spec.mode])
    for m in modes:
        RunSpec(mode=m)  # validates
    net = load_network(spec)
    ts = load_series(spec)
    errors = ErrorDistribution.fit(ts.errors, spec.bandwidth) if spec.series == "scenarios" else None
    days = list(day_range(spec, ts))
    keep = output_dir is not None
    if jobs > 1 and len(days) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_day = list(pool.map(_run_day, [net] * len(days), [spec] * len(days),
                                    [modes] * len(days), [ts] * len(days), days,
                                    [errors] * len(days), [keep] * len(days)))
    else:
        per_day = [_run_day(net, spec, modes, ts, d, errors, keep) for d in days]
    reports = []
    for k, mode in enumerate(modes):
        results = [dr[k] for dr in per_day]
        rep = _assemble(spec, mode, results)
        if output_dir is not None:
            root = Path(output_dir)
            rep.save(root)
            for r in results:
                _write_day(root, rep.name, r)
            if write_mps:
                export_models(replace(spec, mode=mode, name=rep.name), root)
        reports.append(rep)
    return reports


def run(spec: RunSpec, output_dir=None, jobs: int = 1, write_mps: bool = False) -> CostReport:
    """Run the pipeline for ``spec.mode`` over the selected days."""
    return run_modes(spec, [spec.mode], output_dir, jobs, write_mps)[0]


# -- comparison ---------------------------------------------------------------------------------

def _pct(x: float, base: float) -> float:
    return 100.0 * (x - base) / base if base and math.isfinite(base) else float("nan")


def compare(reports: list[CostReport], baseline: str) -> pd.DataFrame:
    """Percent total-cost increase of every report vs ``baseline`` and vs its own series' OPF run.

    Totals are summed over the days that every report completed.  The
    own-OPF column is NaN for series without an OPF run among ``reports``.
    """
    by_name = {r.name: r for r in reports}
    if baseline not in by_name:
        raise WorkflowError(f"baseline run {baseline!r} not among {sorted(by_name)}")
    coverage = {r.name: tuple(sorted(int(d) for d in r.days["day"])) for r in reports}
    if len(set(coverage.values())) > 1:
        raise WorkflowError(f"reports cover different days: {coverage}")
    ok_days = set(coverage[baseline])
    for r in reports:
        ok_days &= {int(d) for d in r.days.loc[r.days["status"] == "ok", "day"]}

    def total(r):
        return float(r.days.loc[r.days["day"].isin(ok_days), "total"].sum()) if ok_days else float("nan")

    opf = {r.series: total(r) for r in reports if Mode.parse(r.mode).kind == "opf"}
    base = total(by_name[baseline])
    rows = []
    for r in reports:
        tot = total(r)
        rows.append({"name": r.name, "series": r.series, "mode": r.mode, "days": len(ok_days),
                     "total": tot, "pct_vs_baseline": _pct(tot, base),
                     "pct_vs_own_opf": _pct(tot, opf.get(r.series, float("nan")))})
    return pd.DataFrame(rows)


def comparison_table(cmp: pd.DataFrame) -> pd.DataFrame:
    """Modes as rows and, per series, the vs-baseline and vs-own-OPF columns side by side."""
    wide = cmp.pivot(index="mode", columns="series", values=["pct_vs_baseline", "pct_vs_own_opf"])
    wide = wide.swaplevel(axis=1).sort_index(axis=1, level=0, sort_remaining=False)
    order = [m for m in dict.fromkeys(cmp["mode"])]
    wide = wide.reindex(order)
    wide.columns = [f"{s}:{c}" for s, c in wide.columns]
    return wide.reset_index()


def spec_dict(spec: RunSpec) -> dict:
    d = asdict(spec)
    d["busbars"] = list(spec.busbars)
    return d
