"""Bundled test networks, scripted case modifiers and synthetic wind series.

``load_case30`` reads the standard 30-bus case shipped in ``data/``.
``congested_case30`` turns it into a wind-dominated, congested variant in
which rearranging the elements at busbar 6 pays off at high wind.
``synthetic_case50`` generates a deterministic 50-bus hybrid AC/DC grid
with the element counts of the three-zone benchmark (the benchmark file
itself is not redistributed here) and ``modify_case50`` applies the
cost/load/wind edits used to congest it.  ``synthetic_wind_series``
produces quarter-hourly measured and day-ahead forecast capacity factors
with realistic persistence and forecast errors.
"""
from __future__ import annotations

from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .casefile import parse_case, write_case
from .network import (AcBranch, AcBus, Converter, DcBranch, DcBus, Generator, Load, Network,
                      add_slack_recourse, augment_for_splitting)

SPLIT_BUS_30 = 6
SPLIT_BUS_50 = 221
SLACK_COST_MULTIPLIER = 10.0

# congested 30-bus variant
WIND_BUS_30 = 8
WIND_CAPACITY_30 = 1.2  # p.u. on the 100 MVA base
RATING_SCALE_30 = 0.7


def data_path(name: str) -> Path:
    return Path(str(resources.files("gridtopo") / "data" / name))


def load_case30() -> Network:
    return parse_case(data_path("case30.m"))


def load_case50() -> Network:
    return parse_case(data_path("case50_acdc.m"))


def congested_case30(base: Network | None = None, wind_bus: int = WIND_BUS_30,
                     wind_capacity: float = WIND_CAPACITY_30,
                     rating_scale: float = RATING_SCALE_30) -> Network:
    """30-bus case with a zero-cost wind farm at ``wind_bus`` and tightened ratings.

    The wind farm gets active capacity ``wind_capacity`` and a reactive
    range of 30% of it either way.  All branch ratings are multiplied by
    ``rating_scale``.  With the defaults, splitting busbar 6 is worth
    nothing at capacity factors up to about 0.5 and more than 10% of the
    LPAC cost at capacity factors of 0.6 and above.
    """
    net = base or load_case30()
    # values are rounded to what a case file in MW holds, so the result round-trips exactly
    mw = lambda v: round(v * net.base_mva, 6) / net.base_mva  # noqa: E731
    gid = max(g.id for g in net.generators) + 1
    wind = Generator(gid, wind_bus, 0.0, mw(wind_capacity), mw(-0.3 * wind_capacity),
                     mw(0.3 * wind_capacity), is_wind=True)
    branches = [replace(b, p_max=mw(b.p_max * rating_scale), q_max=mw(b.q_max * rating_scale))
                for b in net.ac_branches]
    return net.replace(generators=net.generators + (wind,), ac_branches=tuple(branches),
                       name=f"{net.name}_congested")


def prepare_case(net: Network, busbars=(), slack_multiplier: float = SLACK_COST_MULTIPLIER) -> Network:
    """Add slack-recourse units, then split the given busbars."""
    return augment_for_splitting(add_slack_recourse(net, slack_multiplier), list(busbars))


# -- synthetic 50-bus hybrid grid -------------------------------------------------------------

_ZONES = ((100, 13, 7), (200, 24, 11), (300, 13, 6))  # id base, buses, chords
_TIES = ((105, 210), (213, 305), (110, 308))
_CONVERTER_BUSES = (107, 113, 205, 212, 221, 303, 311)
_N_GENERATORS = 65
_N_CHEAP = 12
_N_BIG_LOADS = 6


def synthetic_case50(seed: int = 50) -> Network:
    """Deterministic 50-bus AC grid in three zones linked by a 7-terminal DC ring.

    Counts: 50 AC buses (101-113, 201-224, 301-313), 77 AC branches (a ring
    plus chords per zone and three inter-zone ties), 7 DC buses, 7
    converters, 7 DC branches and 65 generators, twelve of which have a
    linear cost below 0.14 per MWh.
    """
    rng = np.random.default_rng(seed)
    base = 100.0
    buses, branches = [], []
    for zb, n, n_chords in _ZONES:
        ids = [zb + k for k in range(1, n + 1)]
        buses += [AcBus(i, vmin=0.9, vmax=1.1, is_reference=(i == 101)) for i in ids]
        pairs = [(ids[k], ids[(k + 1) % n]) for k in range(n)]
        taken = {frozenset(p) for p in pairs}
        while len(pairs) < n + n_chords:
            a = int(rng.integers(n))
            b = (a + int(rng.integers(2, 6))) % n
            key = frozenset((ids[a], ids[b]))
            if key not in taken:
                taken.add(key)
                pairs.append((ids[a], ids[b]))
        branches += pairs
    branches += list(_TIES)
    ac_branches = []
    for k, (f, t) in enumerate(branches, 1):
        x = float(rng.uniform(0.03, 0.12))
        rating = float(rng.choice([2.0, 2.5, 3.0, 4.0]))
        ac_branches.append(AcBranch(k, f, t, r=round(x / 8, 5), x=round(x, 5),
                                    b_charging=round(float(rng.uniform(0.01, 0.08)), 4),
                                    p_max=rating, q_max=rating))

    dc_buses = [DcBus(e, vmin=0.9, vmax=1.1) for e in range(1, 8)]
    dc_branches = [DcBranch(e, e, e % 7 + 1, y=round(1 / 0.052, 4), poles=2, p_min=-2.0, p_max=2.0)
                   for e in range(1, 8)]
    converters = [Converter(e, ac, e, s_max=2.0, loss_a=0.011, loss_b=0.0089)
                  for e, ac in enumerate(_CONVERTER_BUSES, 1)]

    bus_ids = [b.id for b in buses]
    gen_buses = bus_ids + [int(b) for b in rng.choice(bus_ids, _N_GENERATORS - len(bus_ids), replace=False)]
    cheap = set(rng.choice(_N_GENERATORS, _N_CHEAP, replace=False).tolist())
    gens = []
    for k, bus in enumerate(gen_buses):
        p_max = float(rng.choice([0.5, 1.0, 1.5, 2.0]))
        c1_mw = float(rng.uniform(0.02, 0.13)) if k in cheap else float(rng.uniform(0.15, 0.6))
        gens.append(Generator(k + 1, bus, 0.0, p_max, -0.5 * p_max, 0.5 * p_max,
                              c2=round(float(rng.uniform(0.0, 0.002)), 5) / base ** -2,
                              c1=round(c1_mw, 4) / base ** -1, vg=1.0))
    loaded = [b for b in bus_ids if rng.random() < 0.7]
    big = set(rng.choice(loaded, _N_BIG_LOADS, replace=False).tolist())
    loads = []
    for k, bus in enumerate(loaded):
        p = float(rng.uniform(2.05, 2.6) if bus in big else rng.uniform(0.1, 0.8))
        # stored the way a case file in MW/MVAr parses, so the file round-trips exactly
        loads.append(Load(k + 1, bus, round(p * base, 1) / base, round(0.2 * p * base, 1) / base))
    return Network(base_mva=base, ac_buses=tuple(buses), dc_buses=tuple(dc_buses),
                   ac_branches=tuple(ac_branches), dc_branches=tuple(dc_branches),
                   converters=tuple(converters), generators=tuple(gens), loads=tuple(loads),
                   name="case50_acdc").validate()


def modify_case50(net: Network, wind_below: float = 0.14, cost_factor: float = 1.3,
                  big_load: float = 2.0, load_factor: float = 1.2) -> Network:
    """Congest the 50-bus grid.

    Units whose linear cost per MWh is below ``wind_below`` become wind
    farms (the selection uses the unmodified costs).  Every unit then keeps
    only its linear cost term, multiplied by ``cost_factor``.  Loads above
    ``big_load`` per unit are multiplied by ``load_factor``.
    """
    base = net.base_mva
    # results are rounded to what a case file in MW holds, so they round-trip exactly
    mw = lambda v: round(v * base, 6) / base  # noqa: E731
    gens = []
    for g in net.generators:
        wind = g.c1 / base < wind_below
        c1 = round(g.c1 * base ** -1 * cost_factor, 10) / base ** -1
        gens.append(replace(g, c2=0.0, c0=0.0, c1=c1, is_wind=g.is_wind or wind))
    loads = [replace(l, p=mw(l.p * load_factor), q=mw(l.q * load_factor)) if l.p > big_load else l
             for l in net.loads]
    return net.replace(generators=tuple(gens), loads=tuple(loads), name=f"{net.name}_modified")


def write_synthetic_case50(path) -> None:
    Path(path).write_text(write_case(synthetic_case50()))


# -- synthetic wind series --------------------------------------------------------------------

def synthetic_wind_series(days: int = 14, seed: int = 2024, start: str = "2024-01-08",
                          freq: str = "15min") -> pd.DataFrame:
    """Quarter-hourly measured and day-ahead forecast capacity factors.

    The hourly weather state follows a persistent AR(1) process on the
    logit scale; the forecast sees that state through an autocorrelated
    error with Laplace innovations, so forecast errors are heavy tailed and
    drift over several hours.  Values are clipped to [0, 1].
    """
    rng = np.random.default_rng(seed)
    hours = days * 24
    state = np.empty(hours + 1)
    err = np.empty(hours + 1)
    state[0], err[0] = 1.0, 0.0
    for t in range(1, hours + 1):
        state[t] = 0.6 + 0.96 * (state[t - 1] - 0.6) + rng.normal(0.0, 0.32)
        err[t] = 0.85 * err[t - 1] + rng.laplace(0.0, 0.18)
    sub = int(pd.Timedelta("1h") / pd.Timedelta(freq))
    grid = np.arange(hours * sub) / sub
    x = np.interp(grid, np.arange(hours + 1), state)
    e = np.interp(grid, np.arange(hours + 1), err)
    measured = 1.0 / (1.0 + np.exp(-(x + rng.normal(0.0, 0.05, grid.size))))
    forecast = 1.0 / (1.0 + np.exp(-(x + e)))
    ts = pd.date_range(start, periods=grid.size, freq=freq)
    return pd.DataFrame({"timestamp": ts.strftime("%Y-%m-%d %H:%M:%S"),
                         "measured": np.round(np.clip(measured, 0, 1), 5),
                         "forecast_d1_11am": np.round(np.clip(forecast, 0, 1), 5)})


def write_wind_series(path, **kw) -> None:
    synthetic_wind_series(**kw).to_csv(path, index=False)


def windiest_day(series, column: str = "forecast") -> int:
    """Index of the day with the highest mean capacity factor in ``column``."""
    values = np.asarray(getattr(series, column), float)
    n = len(values) // 24
    return int(np.argmax(values[: n * 24].reshape(n, 24).mean(axis=1)))


def bundled_series_path() -> Path:
    return data_path("wind_14d.csv")
