"""Shared networks for the test suite."""
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from gridtopo.casefile import write_case
from gridtopo.cases import congested_case30, load_case30, prepare_case
from gridtopo.network import (AcBranch, AcBus, Generator, Load, Network, add_slack_recourse,
                              augment_for_splitting)

# reactance and rating per branch of the 5-bus toy; chosen so that splitting bus 3
# (which carries only the branches 2-3 and 3-4) lowers the LPAC cost by about 6%
TOY_PAIRS = ((1, 2), (2, 3), (3, 4), (1, 4), (4, 5), (2, 5))
TOY_X = (0.055, 0.091, 0.128, 0.183, 0.141, 0.271)
TOY_RATING = (1.0, 0.8, 0.6, 1.0, 3.0, 1.5)
TOY_SPLIT_BUS = 3


def toy5(load4: float = 2.0) -> Network:
    """Five-bus ring with a cheap quadratic unit, an expensive unit and a wind farm."""
    buses = [AcBus(1, is_reference=True)] + [AcBus(i) for i in range(2, 6)]
    branches = [AcBranch(k + 1, f, t, r=x / 10, x=x, p_max=lim, q_max=lim)
                for k, ((f, t), x, lim) in enumerate(zip(TOY_PAIRS, TOY_X, TOY_RATING))]
    gens = [Generator(1, 1, 0.0, 3.0, -1.5, 1.5, c2=2.0, c1=10.0),
            Generator(2, 5, 0.0, 3.0, -1.5, 1.5, c1=30.0),
            Generator(3, 2, 0.0, 1.5, -0.5, 0.5, is_wind=True)]
    loads = [Load(1, 4, load4, 0.3), Load(2, 5, 0.5, 0.1)]
    return Network(100.0, tuple(buses), ac_branches=tuple(branches), generators=tuple(gens),
                   loads=tuple(loads), name="toy5").validate()


def toy5_split(load4: float = 2.0) -> Network:
    return augment_for_splitting(add_slack_recourse(toy5(load4), 10.0), [TOY_SPLIT_BUS])


def write_toy_inputs(root, days: int = 2) -> None:
    """Write ``toy5.m`` and an hourly ``wind.csv`` of ``days`` days into ``root``."""
    write_case(toy5(), root / "toy5.m")
    t = np.arange(24 * days)
    forecast = 0.5 + 0.4 * np.sin(2 * np.pi * t / 24)
    measured = np.clip(forecast + 0.08 * np.cos(0.7 * t), 0.0, 1.0)
    pd.DataFrame({"timestamp": pd.date_range("2024-03-01", periods=len(t), freq="h"),
                  "measured": measured.round(5), "forecast": forecast.round(5)}
                 ).to_csv(root / "wind.csv", index=False)


@pytest.fixture(scope="session")
def case30() -> Network:
    return load_case30()


@pytest.fixture(scope="session")
def congested30() -> Network:
    """Congested 30-bus case with slack recourse and busbar 6 prepared for splitting."""
    return prepare_case(congested_case30(), [6])


@pytest.fixture(scope="session")
def toy() -> Network:
    return toy5_split()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def switch_audit(net: Network, x: np.ndarray, layout) -> dict[str, float]:
    """Largest violation of each switch rule at the point ``x``.

    Closed switches tie angles and magnitudes (DC voltages) of their end
    buses; open switches carry no flow; reconnection pairs are exclusive
    (exactly one closed); a closed coupler keeps elements on the original
    half.  Every entry should be zero up to solver tolerance.
    """
    out = {"closed_gap": 0.0, "open_flow": 0.0, "exclusivity": 0.0, "coupler": 0.0}
    for t in layout.timesteps:
        z = {s.id: layout.get(x, "z", s.id, t) for s in net.switches}
        for s in net.switches:
            zs = round(z[s.id])
            for w in range(layout.n_scenarios):
                if s.side == "ac":
                    gaps = [layout.get(x, q, s.from_bus, t, w) - layout.get(x, q, s.to_bus, t, w)
                            for q in ("th", "ph")]
                    flows = [layout.get(x, "psw", s.id, t, w), layout.get(x, "qsw", s.id, t, w)]
                else:
                    gaps = [layout.get(x, "phdc", s.from_bus, t, w) - layout.get(x, "phdc", s.to_bus, t, w)]
                    flows = [layout.get(x, "psw", s.id, t, w)]
                if zs == 1:
                    out["closed_gap"] = max(out["closed_gap"], *map(abs, gaps))
                else:
                    out["open_flow"] = max(out["open_flow"], *map(abs, flows))
            if s.kind == "reconnection":
                if s.id < s.partner:
                    out["exclusivity"] = max(out["exclusivity"], abs(z[s.id] + z[s.partner] - 1.0))
                cpl = net.switch(s.coupler)
                if s.to_bus != cpl.from_bus:
                    # element on the auxiliary half while the coupler is closed
                    out["coupler"] = max(out["coupler"], max(0.0, z[s.id] + z[cpl.id] - 1.0))
    return out


# one "PASS <criterion>" or "FAIL <criterion>" line per acceptance criterion
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
