"""Instance building, MPS round trips, backends and the enumeration oracle."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridtopo.lpac import ModelConfig, build
from gridtopo.mip import (EQ, FEAS_TOL, GE, LE, MAX_BINARIES, ConfigurationError, MipBuilder,
                          MipError, enumerate_binaries, export_mps, get_backend, read_mps, solve)
from gridtopo.scenario import ScenarioSet

BACKENDS = ["highs", "scipy"]


def _small(obj_lb=3.0):
    mb = MipBuilder("tiny")
    x = mb.var("x", obj_lb, 10.0)
    mb.cost(x, 1.0)
    return mb.build()


@st.composite
def random_mips(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    n_bin = draw(st.integers(0, 6))
    n_cont = draw(st.integers(1, 4))
    n_rows = draw(st.integers(1, 5))
    mb = MipBuilder("rand")
    cols = [mb.var(f"z{k}", 0.0, 1.0, binary=True) for k in range(n_bin)]
    cols += [mb.var(f"x{k}", float(rng.integers(-3, 1)), float(rng.integers(1, 6)))
             for k in range(n_cont)]
    for j in cols:
        mb.cost(j, float(rng.integers(-5, 6)))
    for r in range(n_rows):
        a = rng.integers(-4, 5, len(cols)).astype(float)
        sense = [LE, GE, EQ][int(rng.integers(0, 3)) if r else 0]
        mb.row(f"r{r}", cols, a, sense, float(rng.integers(-3, 6)))
    mb.c0 = float(rng.integers(-2, 3))
    return mb.build()


# -- instances ---------------------------------------------------------------------------------

def test_builder_validates_binaries():
    mb = MipBuilder()
    mb.var("z", 0.0, 2.0, binary=True)
    with pytest.raises(MipError):
        mb.build()


def test_builder_rejects_duplicate_names():
    mb = MipBuilder()
    mb.var("x")
    mb.var("x")
    with pytest.raises(MipError):
        mb.build()


def test_max_violation_measures_rows_bounds_and_integrality():
    mb = MipBuilder()
    z = mb.var("z", 0, 1, binary=True)
    x = mb.var("x", 0, 2)
    mb.row("r", [z, x], [1, 1], LE, 1.5)
    m = mb.build()
    assert m.max_violation(np.array([1.0, 0.5])) == 0.0
    assert m.max_violation(np.array([1.0, 1.0])) == pytest.approx(0.5)
    assert m.max_violation(np.array([0.4, 0.0])) == pytest.approx(0.4)
    assert m.max_violation(np.array([0.0, 3.0])) == pytest.approx(1.5)


# -- MPS ---------------------------------------------------------------------------------------

def test_empty_instance_writes_only_headers(tmp_path):
    m = MipBuilder("empty").build()
    export_mps(m, tmp_path / "e.mps")
    text = (tmp_path / "e.mps").read_text().split()
    assert text[0] == "NAME" and "ROWS" in text and "COLUMNS" in text and text[-1] == "ENDATA"
    back = read_mps(tmp_path / "e.mps")
    assert back.n_vars == 0 and back.n_rows == 0


def test_one_binary_gives_one_marker_pair(tmp_path):
    mb = MipBuilder("one")
    z = mb.var("z", 0, 1, binary=True)
    mb.row("lim", [z], [1.0], LE, 1.0)
    export_mps(mb.build(), tmp_path / "b.mps")
    text = (tmp_path / "b.mps").read_text()
    assert text.count("'INTORG'") == 1 and text.count("'INTEND'") == 1


def test_long_names_are_renamed_with_a_mapping_file(tmp_path):
    mb = MipBuilder("long")
    a = mb.var("a_rather_long_name", 0, 1)
    mb.cost(a, 2.0)
    mb.row("another_long_row", [a], [1.0], GE, 0.25)
    m = mb.build()
    mp = export_mps(m, tmp_path / "l.mps")
    assert mp is not None and mp.exists()
    assert "C0000000" in (tmp_path / "l.mps").read_text()
    back = read_mps(tmp_path / "l.mps")
    assert back.names == m.names and back.row_names == m.row_names
    raw = read_mps(tmp_path / "l.mps", mapping=None)
    assert raw.names == ("C0000000",)


@settings(max_examples=60, deadline=None)
@given(m=random_mips())
def test_mps_round_trip_is_exact(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("mps") / "m.mps"
    export_mps(m, path)
    back = read_mps(path)
    assert back.names == m.names and back.row_names == m.row_names
    assert np.array_equal(back.lb, m.lb) and np.array_equal(back.ub, m.ub)
    assert np.array_equal(back.binary, m.binary) and np.array_equal(back.c, m.c)
    assert back.c0 == m.c0
    assert np.array_equal(back.sense, m.sense) and np.array_equal(back.rhs, m.rhs)
    assert (back.A != m.A).nnz == 0
    a, b = solve(m, "highs", 0.0), solve(back, "highs", 0.0)
    assert a.status == b.status
    if a.status == "optimal":
        assert b.objective == pytest.approx(a.objective, abs=1e-9)


def test_toy_lpac_instance_solved_from_mps_by_an_external_reader(toy, tmp_path):
    import highspy

    m, _ = build(toy, ScenarioSet.deterministic([0.9]), ModelConfig(mode="hourly"))
    ours = solve(m, "highs", 0.0)
    export_mps(m, tmp_path / "toy.mps")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.readModel(str(tmp_path / "toy.mps"))
    h.run()
    theirs = h.getInfo().objective_function_value
    assert theirs == pytest.approx(ours.objective, rel=1e-6)


# -- backends ----------------------------------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_trivial_lp(backend):
    sol = solve(_small(), backend)
    assert sol.status == "optimal" and sol.objective == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_pair(backend):
    mb = MipBuilder()
    x = mb.var("x", -10, 10)
    mb.row("lo", [x], [1.0], GE, 2.0)
    mb.row("hi", [x], [1.0], LE, 1.0)
    assert solve(mb.build(), backend).status == "infeasible"


def test_unknown_backend_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        get_backend("no-such-solver")


@settings(max_examples=40, deadline=None)
@given(m=random_mips())
def test_backends_agree_and_solutions_are_feasible(m):
    a, b = solve(m, "highs", 0.0), solve(m, "scipy", 0.0)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.objective == pytest.approx(b.objective, abs=1e-6)
        assert m.max_violation(a.x) <= FEAS_TOL
        assert m.max_violation(b.x) <= FEAS_TOL
        assert m.objective(a.x) == pytest.approx(a.objective, abs=1e-6)


# -- enumeration oracle ------------------------------------------------------------------------

def test_enumeration_without_binaries_is_an_lp():
    m = _small()
    assert enumerate_binaries(m).objective == pytest.approx(solve(m).objective)


def test_exclusivity_prunes_to_three_assignments():
    mb = MipBuilder()
    z1 = mb.var("z1", 0, 1, binary=True)
    z2 = mb.var("z2", 0, 1, binary=True)
    mb.cost(z1, -1.0)
    mb.cost(z2, -2.0)
    mb.row("excl", [z1, z2], [1, 1], LE, 1.0)
    sol = enumerate_binaries(mb.build())
    assert sol.n_enumerated == 3
    assert sol.objective == pytest.approx(-2.0)


def test_enumeration_refuses_too_many_binaries():
    mb = MipBuilder()
    for k in range(MAX_BINARIES + 1):
        mb.var(f"z{k}", 0, 1, binary=True)
    with pytest.raises(MipError):
        enumerate_binaries(mb.build())


@settings(max_examples=60, deadline=None)
@given(m=random_mips())
def test_enumeration_bounds_the_backend(m):
    gap = 1e-3
    exact = enumerate_binaries(m)
    sol = solve(m, "highs", gap)
    assert (exact.status == "optimal") == (sol.status == "optimal")
    if sol.status == "optimal":
        assert exact.objective <= sol.objective + gap * abs(sol.objective) + 1e-9
        assert sol.objective <= exact.objective + gap * abs(exact.objective) + 1e-6
        assert m.max_violation(exact.x) <= FEAS_TOL
