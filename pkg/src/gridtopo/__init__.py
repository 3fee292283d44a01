"""Stochastic multistep topology optimization for AC and hybrid AC/DC grids.

Modules:

``network``, ``casefile``, ``cases``
    grid data model, MATPOWER-style case files, bundled test cases
``scenario``
    wind series ingestion, forecast-error fitting, weighted scenarios
``mip``
    MILP instances, solver backends, MPS files, an enumeration oracle
``lpac``
    the switching model over the linearized AC/DC physics and its solvers
``acpf``
    exact power flow, the feasibility dispatch and the redispatch step
``workflow``
    day-by-day runs, cost reports and comparisons
"""
from .acpf import Setpoints, feasibility_opf, newton_pf, redispatch
from .cases import congested_case30, load_case30, load_case50, modify_case50, prepare_case
from .casefile import parse_case, write_case
from .lpac import Mode, ModelConfig, TopologyPlan, build, solve_model
from .network import Network, add_slack_recourse, augment_for_splitting
from .scenario import ErrorDistribution, ScenarioSet, TimeSeries, generate_scenarios, ingest_csv
from .workflow import CostReport, RunSpec, compare, run, run_modes

__version__ = "0.1.0"

__all__ = [
    "CostReport", "ErrorDistribution", "Mode", "ModelConfig", "Network", "RunSpec", "ScenarioSet",
    "Setpoints", "TimeSeries", "TopologyPlan", "add_slack_recourse", "augment_for_splitting", "build",
    "compare", "congested_case30", "feasibility_opf", "generate_scenarios", "ingest_csv",
    "load_case30", "load_case50", "modify_case50", "newton_pf", "parse_case", "prepare_case",
    "redispatch", "run", "run_modes", "solve_model", "write_case",
]
