"""Command-line entry points: ``scenarios``, ``run`` and ``report``.

Settings come from an optional flat YAML file (``--config``) and are
overridden by flags.  Exit codes: 0 success, 1 a run finished with failed
days or fidelity violations, 2 invalid input, 3 no usable solver backend.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from .lpac import ModelError
from .mip import ConfigurationError, available_backends, get_backend
from .network import NetworkError
from .scenario import ErrorDistribution, ScenarioError, generate_scenarios, ingest_csv
from .workflow import (CostReport, RunSpec, WorkflowError, compare, comparison_table, export_models,
                       run_modes)

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2, 3

# every key accepted in a config file: (default, description)
CONFIG_KEYS = {
    "case": ("case30_congested", "bundled case (case30, case30_congested, case50, case50_modified) "
                                 "or path to a MATPOWER-style case file"),
    "busbars": ([6], "busbars prepared for splitting"),
    "timeseries": (None, "wind CSV with timestamp, measured and forecast columns "
                         "(default: the bundled 14-day series)"),
    "days": (None, "number of 24-hour days to run (default: all complete days)"),
    "first_day": (0, "index of the first day to run"),
    "mode": ("opf", "opf, hourly, one, limited:S or limited:S:Sdc (UpToOne = limited:1)"),
    "series": ("forecast", "D-1 input: measured, forecast or scenarios"),
    "k": (6, "scenarios per hour for series=scenarios (1, 4, 6 or 8)"),
    "seed": (0, "random seed of scenario sampling and clustering"),
    "gap": (1e-3, "relative MIP gap (method=mip)"),
    "n_samples": (100_000, "error samples drawn per hour before clustering"),
    "bandwidth": ("auto", "kernel density bandwidth, or auto for Silverman's rule"),
    "slack_multiplier": (10.0, "cost multiplier of the slack-recourse units"),
    "cosine_cuts": (11, "tangent cuts per branch for the cosine surrogate"),
    "cost_segments": (8, "segments of the piecewise-linear generation cost"),
    "method": ("decompose", "decompose (exact cost-table solve) or mip (one MILP per block)"),
    "backend": (None, f"solver backend, one of {available_backends()} (default: first available)"),
    "scenario_file": (None, "fixed scenario CSV used instead of sampling when series=scenarios"),
    "name": (None, "run name (default: <series>_<mode>)"),
    "output_dir": ("runs", "directory receiving one folder per run"),
    "jobs": (1, "worker processes; days run in parallel"),
    "export_mps": (False, "also write each day's D-1 model as model.mps"),
}
_SPEC_KEYS = {f.name for f in fields(RunSpec)}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def load_config(path) -> dict:
    """Read a flat YAML mapping and reject keys that are not in ``CONFIG_KEYS``."""
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise CliError(f"config file {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(f"config file {p} must hold a key-value mapping")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise CliError(f"config file {p}: unknown key(s) {', '.join(unknown)}")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise CliError(f"config file {p}: keys must be flat, {', '.join(nested)} is nested")
    return data


def _settings(args, flag_keys) -> dict:
    cfg = {k: d for k, (d, _) in CONFIG_KEYS.items()}
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in flag_keys:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _config_help() -> str:
    lines = ["config keys (flat YAML; flags override):"]
    for key, (default, text) in CONFIG_KEYS.items():
        lines.append(f"  {key:<17} {text} [default: {default}]")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="gridtopo", description=__doc__, formatter_class=fmt,
                                epilog=_config_help())
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scenarios", help="fit forecast errors and write weighted scenarios",
                       formatter_class=fmt, epilog=_config_help())
    s.add_argument("--config", help="flat YAML file (keys: timeseries, k, seed, n_samples, bandwidth)")
    s.add_argument("--input", dest="timeseries", help="wind CSV (timestamp, measured, forecast)")
    s.add_argument("--k", type=int, help="scenarios per hour")
    s.add_argument("--seed", type=int, help="random seed")
    s.add_argument("--n-samples", dest="n_samples", type=int, help="samples per hour")
    s.add_argument("--bandwidth", help="kernel bandwidth or 'auto'")
    s.add_argument("--output", default="scenarios.csv", help="scenario file to write")
    s.add_argument("--summary", default=None,
                   help="error-density summary CSV (default: <output stem>_pdf.csv)")

    r = sub.add_parser("run", help="run the day-ahead pipeline and write a results directory",
                       formatter_class=fmt, epilog=_config_help())
    r.add_argument("--config", help="flat YAML file with any of the keys below")
    r.add_argument("--case")
    r.add_argument("--busbars", type=int, nargs="*")
    r.add_argument("--timeseries")
    r.add_argument("--mode", nargs="+",
                   help="one or more modes; several modes share LPAC tables and AC checks")
    r.add_argument("--series", choices=["measured", "forecast", "scenarios"])
    r.add_argument("--k", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--days", type=int)
    r.add_argument("--first-day", dest="first_day", type=int)
    r.add_argument("--gap", type=float)
    r.add_argument("--method", choices=["decompose", "mip"])
    r.add_argument("--backend")
    r.add_argument("--scenario-file", dest="scenario_file")
    r.add_argument("--name")
    r.add_argument("--output-dir", dest="output_dir")
    r.add_argument("--jobs", type=int)
    r.add_argument("--export-mps", dest="export_mps", action="store_const", const=True)
    r.add_argument("--export-only", action="store_true",
                   help="write each day's model.mps and stop; needs no solver")

    c = sub.add_parser("report", help="compare completed runs", formatter_class=fmt)
    c.add_argument("runs", nargs="*", help="run names (default: every run in the directory)")
    c.add_argument("--runs-dir", default="runs")
    c.add_argument("--baseline", required=True, help="run name all others are compared with")
    c.add_argument("--output", default=None, help="CSV to write (default: <runs-dir>/comparison.csv)")
    return p


def cmd_scenarios(args) -> int:
    cfg = _settings(args, ["timeseries", "k", "seed", "n_samples", "bandwidth"])
    if not cfg["timeseries"]:
        raise CliError("scenarios needs --input (or timeseries in the config)")
    path = Path(cfg["timeseries"])
    if not path.exists():
        raise CliError(f"input file {path} not found")
    ts = ingest_csv(path)
    bw = cfg["bandwidth"]
    bw = bw if bw in ("auto", None) else float(bw)
    dist = ErrorDistribution.fit(ts.errors, bw)
    scen = generate_scenarios(ts, int(cfg["k"]), int(cfg["n_samples"]), int(cfg["seed"]), dist)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    scen.to_csv(out)
    summary = Path(args.summary) if args.summary else out.with_name(out.stem + "_pdf.csv")
    dist.summary_frame().to_csv(summary, index=False)
    print(f"wrote {out} ({scen.horizon} hours x {scen.n_scenarios} scenarios) and {summary}")
    return EXIT_OK


def _spec(cfg: dict, mode: str) -> RunSpec:
    kw = {k: v for k, v in cfg.items() if k in _SPEC_KEYS}
    kw["mode"] = mode
    kw["busbars"] = tuple(kw.get("busbars") or ())
    for key in ("timeseries", "scenario_file", "case"):
        if kw.get(key) is not None:
            kw[key] = str(kw[key])
    return RunSpec(**kw)


def cmd_run(args) -> int:
    keys = [k for k in CONFIG_KEYS if k != "mode"]
    cfg = _settings(args, keys)
    modes = args.mode or [cfg["mode"]]
    modes = [m for item in modes for m in str(item).split(",") if m]
    specs = [_spec(cfg, m) for m in modes]
    if cfg["name"] and len(modes) > 1:
        raise CliError("--name applies to a single mode")
    if args.export_only:
        for spec in specs:
            paths = export_models(spec, cfg["output_dir"])
            print(f"{spec.run_name}: wrote {len(paths)} model file(s)")
        return EXIT_OK
    try:
        get_backend(cfg["backend"])
    except ConfigurationError as exc:
        raise CliError(f"{exc}; install highspy or scipy, or use --export-only to write MPS "
                       "files for an external solver", EXIT_BACKEND) from exc
    reports = run_modes(specs[0], modes, cfg["output_dir"], int(cfg["jobs"]), bool(cfg["export_mps"]))
    status = EXIT_OK
    for rep in reports:
        flag = "ok" if rep.ok else "FAILED"
        print(f"{rep.name}: total {rep.total:.2f} over {len(rep.days)} day(s) [{flag}]")
        if rep.failed_days:
            print(f"  failed days: {rep.failed_days}")
            status = EXIT_FAILED
        if not rep.fidelity_ok:
            print("  LPAC fidelity bound violated on day(s) "
                  f"{rep.days.loc[~rep.days['fidelity_ok'], 'day'].tolist()}")
            status = EXIT_FAILED
    return status


def cmd_report(args) -> int:
    root = Path(args.runs_dir)
    names = list(args.runs)
    if not names and root.exists():
        names = sorted(p.name for p in root.iterdir() if (p / "report.csv").exists())
    names = [args.baseline] + [n for n in names if n != args.baseline]
    reports = []
    for name in names:
        if not (root / name / "report.csv").exists():
            raise CliError(f"run {name!r} not found in {root}")
        reports.append(CostReport.load(root / name))
    if len(reports) < 2:
        raise CliError("report needs at least two completed runs")
    cmp = compare(reports, args.baseline)
    out = Path(args.output) if args.output else root / "comparison.csv"
    comparison_table(cmp).to_csv(out, index=False)
    cmp.to_csv(out.with_name(out.stem + "_long.csv"), index=False)
    with_cols = ["name", "total", "pct_vs_baseline", "pct_vs_own_opf"]
    print(cmp[with_cols].to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"scenarios": cmd_scenarios, "run": cmd_run, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"error: {exc}; use --export-only to write MPS files instead", file=sys.stderr)
        return EXIT_BACKEND
    except (WorkflowError, ScenarioError, ModelError, NetworkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
