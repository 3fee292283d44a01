"""Model construction, linearizations, modes and the decomposition solver."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gridtopo.cases import bundled_series_path, congested_case30, windiest_day
from gridtopo.lpac import (IntegralityError, Mode, ModelConfig, ModelError, TopologyPlan, build,
                           build_instances, cosine_cut_error_bound, cosine_cuts, cosine_kappa,
                           cost_table, extract_topology, mirror_classes, pwl_cost, pwl_error_bound,
                           solve_model, step_assignments)
from gridtopo.mip import MipSolution, enumerate_binaries, solve
from gridtopo.network import (AcBranch, AcBus, Generator, Load, Network, NetworkError,
                              add_slack_recourse)
from gridtopo.scenario import ScenarioSet, ingest_csv

from conftest import switch_audit, toy5_split
from oracles import reference_lpac_opf

GAP = 1e-3


def two_bus() -> Network:
    return Network(ac_buses=(AcBus(1, is_reference=True), AcBus(2)),
                   ac_branches=(AcBranch(1, 1, 2, r=0.0, x=0.1),),
                   generators=(Generator(1, 1, 0.0, 5.0, -5.0, 5.0, c1=10.0),),
                   loads=(Load(1, 2, 1.0, 0.0),), name="two").validate()


# -- linearizations ----------------------------------------------------------------------------

def test_cosine_cuts_allow_one_at_zero_angle():
    for a, s in cosine_cuts(0.5236, 11):
        assert a + s * 0.0 >= 1.0 - 1e-12


def test_cosine_cuts_reach_the_endpoint():
    dmax = 0.5236
    cuts = cosine_cuts(dmax, 11)
    for d in (dmax, -dmax):
        assert min(a + s * d for a, s in cuts) <= math.cos(dmax) + 1e-9


@pytest.mark.parametrize("dmax,n", [(0.5236, 11), (0.5236, 2), (1.0, 5), (0.2, 41)])
def test_cosine_cut_error_by_dense_sampling(dmax, n):
    cuts = np.array(cosine_cuts(dmax, n))
    d = np.linspace(-dmax, dmax, 200_001)
    envelope = (cuts[:, :1] + cuts[:, 1:] * d).min(axis=0)
    err = envelope - (1 - cosine_kappa(dmax) * d * d)
    assert err.min() >= -1e-12  # the cuts never cut into the quadratic
    assert err.max() <= cosine_cut_error_bound(dmax, n) * (1 + 1e-9)
    # the bound is attained midway between tangent points
    assert err.max() == pytest.approx(cosine_cut_error_bound(dmax, n), rel=1e-6)


def test_pwl_linear_cost_is_a_single_line():
    assert pwl_cost(0.0, 3.0, 1.0, 0.0, 5.0, 4) == [(1.0, 3.0)]
    assert pwl_error_bound(0.0, 0.0, 5.0, 4) == 0.0


def test_pwl_breakpoints_are_exact():
    lines = pwl_cost(1.0, 0.0, 0.0, 0.0, 2.0, 2)
    env = lambda p: max(a + s * p for a, s in lines)  # noqa: E731
    assert env(0.0) == pytest.approx(0.0)
    assert env(1.0) == pytest.approx(1.0)
    assert env(2.0) == pytest.approx(4.0)


@settings(max_examples=50, deadline=None)
@given(c2=st.floats(0.01, 50), c1=st.floats(-10, 10), c0=st.floats(-5, 5),
       p_min=st.floats(-2, 1), width=st.floats(0.1, 4), segments=st.integers(1, 12))
def test_pwl_error_by_dense_sampling(c2, c1, c0, p_min, width, segments):
    p_max = p_min + width
    lines = np.array(pwl_cost(c2, c1, c0, p_min, p_max, segments))
    p = np.linspace(p_min, p_max, 4001)
    env = (lines[:, :1] + lines[:, 1:] * p).max(axis=0)
    exact = c2 * p * p + c1 * p + c0
    scale = 1e-9 * max(1.0, np.abs(exact).max())
    assert (env <= exact + scale).all()
    assert (exact - env).max() <= pwl_error_bound(c2, p_min, p_max, segments) + scale


# -- model construction ------------------------------------------------------------------------

def test_two_bus_single_path_balance():
    m, layout = build(two_bus(), ScenarioSet.deterministic([1.0]), ModelConfig())
    sol = solve(m)
    assert sol.objective == pytest.approx(10.0, abs=1e-9)
    assert layout.get(sol.x, "pf", 1, 0, 0) == pytest.approx(1.0, abs=1e-9)


def test_reduction_identity_on_case30(congested30):
    """Original topology on the augmented grid equals a plain LPAC-OPF without switches."""
    plain = add_slack_recourse(congested_case30(), 10.0)
    for cf in (0.2, 0.9):
        scen = ScenarioSet.deterministic([cf])
        m, _ = build(congested30, scen, ModelConfig(mode="opf"))
        ours = solve(m, gap=0.0).objective
        ref = reference_lpac_opf(plain, cf, 11, 8)
        assert abs(ours - ref) <= 1e-6 * abs(ref)


def test_reduction_identity_with_the_plan_pinned(congested30):
    scen = ScenarioSet.deterministic([0.85])
    plan = TopologyPlan.original(congested30, 1)
    m, _ = build(congested30, scen, ModelConfig(mode="hourly"), fixed=plan)
    ref = reference_lpac_opf(add_slack_recourse(congested_case30(), 10.0), 0.85, 11, 8)
    assert solve(m).objective == pytest.approx(ref, rel=1e-6)


def test_binaries_are_shared_across_scenarios(toy):
    scen = ScenarioSet([[0.2, 0.9, 0.5]], [[0.3, 0.3, 0.4]])
    _, layout = build(toy, scen, ModelConfig(mode="hourly"))
    zkeys = [k for k in layout.index if k[0] == "z"]
    assert all(len(k) == 3 for k in zkeys)
    assert len(zkeys) == len(toy.switches)
    assert any(k[0] == "pg" and k[3] == 2 for k in layout.index)


def test_allow_ots_relaxes_exclusivity(toy):
    scen = ScenarioSet.deterministic([0.5])
    eq, _ = build(toy, scen, ModelConfig(mode="hourly"))
    le, _ = build(toy, scen, ModelConfig(mode="hourly", allow_ots=True))
    rows_eq = [eq.sense[k] for k, n in enumerate(eq.row_names) if n.startswith("excl")]
    rows_le = [le.sense[k] for k, n in enumerate(le.row_names) if n.startswith("excl")]
    assert set(rows_eq) == {"="} and set(rows_le) == {"<"}
    assert solve(le, gap=0).objective <= solve(eq, gap=0).objective + 1e-9


def test_switch_cost_is_charged_per_closed_coupler(toy):
    scen = ScenarioSet.deterministic([0.5])
    a = solve(build(toy, scen, ModelConfig(mode="opf"))[0]).objective
    b = solve(build(toy, scen, ModelConfig(mode="opf", switch_cost=2.5))[0]).objective
    assert b - a == pytest.approx(2.5 * len(toy.couplers))


def test_build_rejects_inconsistent_inputs(toy):
    with pytest.raises(ModelError):
        build(toy, ScenarioSet.deterministic([0.5, 0.5]), ModelConfig(horizon=3))
    no_wind = two_bus()
    with pytest.raises(ModelError, match="wind"):
        build(no_wind, ScenarioSet([[0.2, 0.8]], [[0.5, 0.5]]), ModelConfig())
    bad = no_wind.replace(generators=(Generator(1, 1, 0.0, math.inf, -5, 5, c2=1.0),))
    with pytest.raises(NetworkError):
        build(bad, ScenarioSet.deterministic([1.0]), ModelConfig())


def test_mode_parsing():
    assert Mode.parse("UpToTwo") == Mode("limited", 2, 2)
    assert Mode.parse("limited:1:0") == Mode("limited", 1, 0)
    assert Mode.parse("HourlyBS") == Mode("hourly")
    with pytest.raises(ModelError):
        Mode.parse("weekly")
    with pytest.raises(ModelError):
        ModelConfig(cosine_cuts=1)


# -- topology extraction -----------------------------------------------------------------------

def test_extract_all_closed(toy):
    m, layout = build(toy, ScenarioSet.deterministic([0.5]), ModelConfig(mode="hourly"))
    x = np.zeros(m.n_vars)
    x[layout.z_cols()] = 1.0
    plan = extract_topology(MipSolution("optimal", 0.0, x), layout, toy)
    assert plan.status.all() and plan.integrality_residual == 0.0


def test_extract_rejects_fractional_binaries(toy):
    m, layout = build(toy, ScenarioSet.deterministic([0.5]), ModelConfig(mode="hourly"))
    x = np.zeros(m.n_vars)
    x[layout.z_cols()[0, 0]] = 0.5
    with pytest.raises(IntegralityError):
        extract_topology(MipSolution("optimal", 0.0, x), layout, toy)


# -- oracle equivalence on the toy -------------------------------------------------------------

TOY_SCEN = ScenarioSet([[0.9], [0.1]], [[1.0], [1.0]])


@pytest.mark.parametrize("mode", ["opf", "hourly", "one", "limited:1"])
def test_backend_matches_enumeration_on_the_toy(toy, mode):
    cfg = ModelConfig(mode=mode, gap=GAP)
    exact = 0.0
    for m, _ in build_instances(toy, TOY_SCEN, cfg):
        assert m.n_binaries <= 11
        sol = enumerate_binaries(m)
        assert sol.status == "optimal"
        exact += sol.objective
    mip = solve_model(toy, TOY_SCEN, cfg)
    dec = solve_model(toy, TOY_SCEN, cfg, method="decompose")
    assert abs(mip.objective - exact) <= GAP * abs(exact) + 1e-9
    assert dec.objective == pytest.approx(exact, rel=1e-9)


def test_splitting_pays_off_on_the_toy(toy):
    opf = solve_model(toy, TOY_SCEN, ModelConfig(mode="opf"), method="decompose").objective
    hourly = solve_model(toy, TOY_SCEN, ModelConfig(mode="hourly"), method="decompose").objective
    assert hourly < opf * 0.99


def test_step_assignments_and_mirrors(toy):
    a = step_assignments(toy, ModelConfig())
    # coupler closed: both elements on the original half; coupler open: any of four placements
    assert len(a) == 5
    rep = mirror_classes(toy, a)
    assert len(np.unique(rep)) == 3  # the bare split bus makes placements come in mirror pairs


# -- Model 2 audits ----------------------------------------------------------------------------

@st.composite
def toy_cases(draw):
    T = draw(st.integers(2, 4))
    cf = draw(st.lists(st.floats(0.0, 1.0), min_size=T, max_size=T))
    load = draw(st.floats(1.2, 2.6))
    return T, cf, load


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(case=toy_cases(), s_max=st.integers(0, 2))
def test_model2_rules_hold_on_random_toys(case, s_max):
    T, cf, load = case
    net = toy5_split(load)
    scen = ScenarioSet.deterministic(cf)
    one = solve_model(net, scen, ModelConfig(mode="one"))
    assert (one.plan.status == one.plan.status[0]).all()
    assert one.plan.action_count() == 0
    lim = solve_model(net, scen, ModelConfig(mode=f"limited:{s_max}"))
    assert lim.plan.action_count("ac") <= s_max
    dec = solve_model(net, scen, ModelConfig(mode=f"limited:{s_max}"), method="decompose")
    assert dec.plan.action_count("ac") <= s_max
    assert dec.objective == pytest.approx(lim.objective, rel=2 * GAP, abs=1e-9)
    for res in (one, lim):
        for sol, layout in zip(res.solutions, res.layouts):
            audit = switch_audit(net, sol.x, layout)
            assert audit["closed_gap"] <= 1e-6 and audit["open_flow"] <= 1e-6
            assert audit["exclusivity"] == 0.0 and audit["coupler"] == 0.0


def test_slots_are_shared_by_simultaneous_changes(toy):
    """Several switches changing at one timestep consume a single slot."""
    plan = TopologyPlan((1, 2, 3), np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1]], bool), ("ac",) * 3)
    assert plan.changes().tolist() == [0, 3, 0]
    assert plan.action_count() == 1


# -- congested 30-bus day ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def windy_day():
    ts = ingest_csv(bundled_series_path())
    d = windiest_day(ts)
    f = ts.forecast[d * 24:(d + 1) * 24]
    assert f.mean() > 0.8
    return ScenarioSet.deterministic(f)


@pytest.fixture(scope="module")
def windy_results(congested30, windy_day):
    table = cost_table(congested30, windy_day, ModelConfig())
    modes = ["hourly", "limited:2", "limited:1", "one", "opf"]
    return {m: solve_model(congested30, windy_day, ModelConfig(mode=m), method="decompose",
                           table=table) for m in modes}


def test_mode_nesting_on_the_windy_day(windy_results):
    obj = [windy_results[m].objective for m in ["hourly", "limited:2", "limited:1", "one", "opf"]]
    for a, b in zip(obj, obj[1:]):
        assert a <= b + 2 * GAP * abs(b)
    assert obj[0] < obj[-1]


def test_switch_physics_on_the_windy_day(congested30, windy_results):
    for res in windy_results.values():
        for sol, layout in zip(res.solutions, res.layouts):
            audit = switch_audit(congested30, sol.x, layout)
            assert audit["closed_gap"] <= 1e-6 and audit["open_flow"] <= 1e-6
            assert audit["exclusivity"] == 0.0 and audit["coupler"] == 0.0


def test_limited_plans_respect_budgets(windy_results):
    assert windy_results["limited:1"].plan.action_count() <= 1
    assert windy_results["limited:2"].plan.action_count() <= 2
    assert windy_results["one"].plan.action_count() == 0
    assert not windy_results["opf"].plan.changes().any()


def test_decomposition_matches_the_mip_on_case30(congested30):
    scen = ScenarioSet([[0.95, 0.6], [0.9, 1.0], [0.3, 0.85]], np.full((3, 2), 0.5))
    for mode in ["opf", "hourly", "one", "limited:1"]:
        cfg = ModelConfig(mode=mode, gap=GAP)
        dec = solve_model(congested30, scen, cfg, method="decompose")
        mip = solve_model(congested30, scen, cfg)
        assert dec.objective <= mip.objective + 1e-9 * abs(mip.objective)
        assert mip.objective - dec.objective <= GAP * abs(mip.objective)
