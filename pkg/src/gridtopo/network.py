"""Hybrid AC/DC network data model and busbar-splitting augmentation.

All electrical quantities are per unit on ``Network.base_mva``; generator
cost coefficients are expressed against per-unit power (``$/h``).
"""
from __future__ import annotations

import dataclasses
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

DEFAULT_ANGLE_BOUND = math.pi / 3
DEFAULT_DTHETA_MAX = math.pi / 6


class NetworkError(ValueError):
    """Raised when a network violates a structural invariant."""


@dataclass(frozen=True)
class AcBus:
    id: int
    vmin: float = 0.9
    vmax: float = 1.1
    amin: float = -DEFAULT_ANGLE_BOUND
    amax: float = DEFAULT_ANGLE_BOUND
    is_reference: bool = False
    # "busbar", "auxiliary" (the i' half of a split busbar) or "terminal"
    role: str = "busbar"
    parent: int | None = None
    vm0: float = 1.0

    @property
    def is_auxiliary(self) -> bool:
        return self.role == "auxiliary"


@dataclass(frozen=True)
class DcBus:
    id: int
    vmin: float = 0.9
    vmax: float = 1.1
    role: str = "busbar"
    parent: int | None = None

    @property
    def is_auxiliary(self) -> bool:
        return self.role == "auxiliary"


@dataclass(frozen=True)
class AcBranch:
    """Pi-model line; series impedance ``r + jx`` and total charging ``b_charging``."""

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    p_max: float = math.inf
    q_max: float = math.inf
    dtheta_max: float = DEFAULT_DTHETA_MAX

    @property
    def g(self) -> float:
        return self.r / (self.r**2 + self.x**2)

    @property
    def b(self) -> float:
        return -self.x / (self.r**2 + self.x**2)

    @property
    def g_s(self) -> float:
        return 0.0

    @property
    def b_s(self) -> float:
        return self.b_charging / 2.0


@dataclass(frozen=True)
class DcBranch:
    id: int
    from_bus: int
    to_bus: int
    y: float
    poles: int = 2
    p_min: float = -math.inf
    p_max: float = math.inf


@dataclass(frozen=True)
class Switch:
    id: int
    side: str  # "ac" | "dc"
    from_bus: int
    to_bus: int
    kind: str  # "coupler" | "reconnection"
    partner: int | None = None
    coupler: int | None = None
    p_min: float = -math.inf
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf


@dataclass(frozen=True)
class Converter:
    id: int
    ac_bus: int
    dc_bus: int
    s_max: float
    loss_a: float = 0.0
    loss_b: float = 0.0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0
    is_wind: bool = False
    is_slack_recourse: bool = False
    pg0: float = 0.0
    qg0: float = 0.0
    vg: float = 1.0

    @property
    def is_null(self) -> bool:
        return self.p_min == self.p_max == 0.0 and self.q_min == self.q_max == 0.0

    def cost(self, p):
        return self.c2 * p * p + self.c1 * p + self.c0

    def marginal_cost(self, p):
        return self.c1 + 2.0 * self.c2 * p


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p: float
    q: float = 0.0


@dataclass(frozen=True)
class Network:
    base_mva: float = 100.0
    ac_buses: tuple[AcBus, ...] = ()
    dc_buses: tuple[DcBus, ...] = ()
    ac_branches: tuple[AcBranch, ...] = ()
    dc_branches: tuple[DcBranch, ...] = ()
    switches: tuple[Switch, ...] = ()
    converters: tuple[Converter, ...] = ()
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    name: str = "network"
    big_m_theta: float | None = None
    big_m_phi: float | None = None
    big_m_dc: float | None = None

    def __post_init__(self):
        for f in ("ac_buses", "dc_buses", "ac_branches", "dc_branches",
                  "switches", "converters", "generators", "loads"):
            object.__setattr__(self, f, tuple(getattr(self, f)))
        if self.big_m_theta is None:
            spread = max((max(abs(b.amin), abs(b.amax)) for b in self.ac_buses), default=0.0)
            object.__setattr__(self, "big_m_theta", 2.0 * spread)
        if self.big_m_phi is None:
            spread = max((max(abs(b.vmin - 1), abs(b.vmax - 1)) for b in self.ac_buses), default=0.0)
            object.__setattr__(self, "big_m_phi", 2.0 * spread)
        if self.big_m_dc is None:
            spread = max((max(abs(b.vmin - 1), abs(b.vmax - 1)) for b in self.dc_buses), default=0.0)
            object.__setattr__(self, "big_m_dc", 2.0 * spread)

    # -- lookups -----------------------------------------------------------
    @cached_property
    def ac_bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.ac_buses)}

    @cached_property
    def dc_bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.dc_buses)}

    @cached_property
    def switch_index(self) -> dict[int, int]:
        return {s.id: k for k, s in enumerate(self.switches)}

    def ac_bus(self, bus_id: int) -> AcBus:
        return self.ac_buses[self.ac_bus_index[bus_id]]

    def dc_bus(self, bus_id: int) -> DcBus:
        return self.dc_buses[self.dc_bus_index[bus_id]]

    def switch(self, switch_id: int) -> Switch:
        return self.switches[self.switch_index[switch_id]]

    @property
    def reference_buses(self) -> list[int]:
        return [b.id for b in self.ac_buses if b.is_reference]

    @property
    def couplers(self) -> list[Switch]:
        return [s for s in self.switches if s.kind == "coupler"]

    @property
    def wind_generators(self) -> list[Generator]:
        return [g for g in self.generators if g.is_wind]

    def bus_demand(self) -> dict[int, tuple[float, float]]:
        out: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0])
        for ld in self.loads:
            out[ld.bus][0] += ld.p
            out[ld.bus][1] += ld.q
        return {k: (v[0], v[1]) for k, v in out.items()}

    def replace(self, **changes) -> "Network":
        return dataclasses.replace(self, **changes)

    def summary(self) -> dict[str, int]:
        return {
            "ac_buses": len(self.ac_buses),
            "dc_buses": len(self.dc_buses),
            "ac_branches": len(self.ac_branches),
            "dc_branches": len(self.dc_branches),
            "converters": len(self.converters),
            "generators": len(self.generators),
            "loads": len(self.loads),
            "switches": len(self.switches),
        }

    # -- validation --------------------------------------------------------
    def validate(self) -> "Network":
        ac = self.ac_bus_index
        dc = self.dc_bus_index
        if len(ac) != len(self.ac_buses):
            raise NetworkError("duplicate AC bus id")
        if len(dc) != len(self.dc_buses):
            raise NetworkError("duplicate DC bus id")
        for b in self.ac_buses:
            if not (b.vmin <= 1.0 <= b.vmax):
                raise NetworkError(f"AC bus {b.id}: vmin <= 1 <= vmax violated")
            if not (b.amin <= 0.0 <= b.amax):
                raise NetworkError(f"AC bus {b.id}: amin <= 0 <= amax violated")
        for b in self.dc_buses:
            if not (b.vmin <= 1.0 <= b.vmax):
                raise NetworkError(f"DC bus {b.id}: vmin <= 1 <= vmax violated")
        for br in self.ac_branches:
            _need(ac, br.from_bus, f"AC branch {br.id}")
            _need(ac, br.to_bus, f"AC branch {br.id}")
            if not br.p_max > 0:
                raise NetworkError(f"AC branch {br.id}: p_max must be positive")
            if not 0 < br.dtheta_max < math.pi / 2:
                raise NetworkError(f"AC branch {br.id}: dtheta_max outside (0, pi/2)")
            if br.r == 0 and br.x == 0:
                raise NetworkError(f"AC branch {br.id}: zero impedance, model it as a switch")
        for br in self.dc_branches:
            _need(dc, br.from_bus, f"DC branch {br.id}")
            _need(dc, br.to_bus, f"DC branch {br.id}")
            if br.poles not in (1, 2):
                raise NetworkError(f"DC branch {br.id}: poles must be 1 or 2")
            if not br.p_min <= 0 <= br.p_max:
                raise NetworkError(f"DC branch {br.id}: p_min <= 0 <= p_max violated")
        for c in self.converters:
            _need(ac, c.ac_bus, f"converter {c.id}")
            _need(dc, c.dc_bus, f"converter {c.id}")
            if not c.s_max > 0 or c.loss_a < 0 or c.loss_b < 0:
                raise NetworkError(f"converter {c.id}: invalid rating or loss coefficients")
        for g in self.generators:
            _need(ac, g.bus, f"generator {g.id}")
            if g.p_min > g.p_max or g.c2 < 0:
                raise NetworkError(f"generator {g.id}: p_min > p_max or non-convex cost")
        for ld in self.loads:
            _need(ac, ld.bus, f"load {ld.id}")
        sw_ids = self.switch_index
        if len(sw_ids) != len(self.switches):
            raise NetworkError("duplicate switch id")
        for s in self.switches:
            table = ac if s.side == "ac" else dc
            if s.side not in ("ac", "dc") or s.kind not in ("coupler", "reconnection"):
                raise NetworkError(f"switch {s.id}: bad side/kind")
            _need(table, s.from_bus, f"switch {s.id}")
            _need(table, s.to_bus, f"switch {s.id}")
            if s.kind == "reconnection":
                if s.partner is None or s.coupler is None:
                    raise NetworkError(f"switch {s.id}: reconnection needs partner and coupler")
                _need(sw_ids, s.partner, f"switch {s.id} partner")
                _need(sw_ids, s.coupler, f"switch {s.id} coupler")
                p = self.switch(s.partner)
                if p.partner != s.id or p.from_bus != s.from_bus or p.to_bus == s.to_bus:
                    raise NetworkError(f"switch {s.id}: inconsistent partner {s.partner}")
                cpl = self.switch(s.coupler)
                if cpl.kind != "coupler" or {s.to_bus, p.to_bus} != {cpl.from_bus, cpl.to_bus}:
                    raise NetworkError(f"switch {s.id}: coupler {s.coupler} does not join its halves")
        split = [s.from_bus for s in self.switches if s.kind == "coupler"]
        if len(split) != len(set(split)):
            raise NetworkError("a split busbar has more than one coupler")
        for island in self.ac_islands():
            refs = [b for b in island if self.ac_bus(b).is_reference]
            if len(refs) != 1:
                raise NetworkError(
                    f"AC island containing bus {min(island)} has {len(refs)} reference buses")
        return self

    def ac_islands(self) -> list[set[int]]:
        """Connected AC components with every switch regarded as closed."""
        edges = [(br.from_bus, br.to_bus) for br in self.ac_branches]
        edges += [(s.from_bus, s.to_bus) for s in self.switches if s.side == "ac"]
        return _components([b.id for b in self.ac_buses], edges)


def _need(table, key, what):
    if key not in table:
        raise NetworkError(f"{what}: unknown reference {key}")


def _components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[set[int]]:
    parent = {n: n for n in nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, set[int]] = defaultdict(set)
    for n in parent:
        groups[find(n)].add(n)
    return sorted(groups.values(), key=min)


# -- busbar splitting --------------------------------------------------------

def _element_rating(kind: str, obj, net: Network) -> float:
    if kind == "branch":
        return max(obj.p_max, obj.q_max)
    if kind == "gen":
        return max(abs(obj.p_min), abs(obj.p_max), abs(obj.q_min), abs(obj.q_max))
    if kind == "load":
        return max(abs(obj.p), abs(obj.q))
    if kind == "conv":
        return obj.s_max
    if kind == "dcbranch":
        return max(abs(obj.p_min), abs(obj.p_max))
    return max(abs(obj.p_min), abs(obj.p_max), abs(obj.q_min), abs(obj.q_max))


def augment_for_splitting(net: Network, busbar_ids: Iterable[int], side: str | None = None) -> Network:
    """Prepare busbars for splitting.

    Each selected busbar ``i`` gets an auxiliary half ``i'`` and a coupler
    switch ``(i, i')``.  Every element attached to ``i`` is moved onto a
    private terminal node that reaches ``i`` and ``i'`` through a pair of
    mutually exclusive reconnection switches.  Ids that exist on both
    sides are resolved to the AC bus unless ``side`` is given.
    """
    busbar_ids = list(busbar_ids)
    if not busbar_ids:
        return net
    if len(set(busbar_ids)) != len(busbar_ids):
        raise NetworkError("busbar listed twice")
    for bid in busbar_ids:
        s = side or ("ac" if bid in net.ac_bus_index else "dc")
        net = _split_one(net, bid, s)
    return net.replace(big_m_theta=None, big_m_phi=None, big_m_dc=None).validate()


def _split_one(net: Network, bid: int, side: str) -> Network:
    table = net.ac_bus_index if side == "ac" else net.dc_bus_index
    if bid not in table:
        raise NetworkError(f"unknown {side.upper()} bus {bid}")
    bus = net.ac_bus(bid) if side == "ac" else net.dc_bus(bid)
    if bus.role != "busbar":
        raise NetworkError(f"bus {bid} is an {bus.role} node and cannot be split")
    if any(s.kind == "coupler" and s.side == side and s.from_bus == bid for s in net.switches):
        raise NetworkError(f"bus {bid} has already been augmented for splitting")
    if side == "ac" and bus.is_reference:
        raise NetworkError(
            f"bus {bid} is the reference of its island; splitting it could leave the "
            "auxiliary half without a reference")

    all_ids = [b.id for b in net.ac_buses] + [b.id for b in net.dc_buses]
    next_bus = max(all_ids, default=0) + 1
    next_sw = max((s.id for s in net.switches), default=0) + 1

    def new_bus(role):
        nonlocal next_bus
        common = dict(id=next_bus, vmin=bus.vmin, vmax=bus.vmax, role=role, parent=bid)
        nb = AcBus(amin=bus.amin, amax=bus.amax, vm0=bus.vm0, **common) if side == "ac" else DcBus(**common)
        next_bus += 1
        return nb

    aux = new_bus("auxiliary")
    new_buses = [aux]
    branches = list(net.ac_branches if side == "ac" else net.dc_branches)
    gens = list(net.generators)
    loads = list(net.loads)
    convs = list(net.converters)
    switches = list(net.switches)

    # (element kind, list, position, attribute to rewire)
    incident: list[tuple[str, list, int, str]] = []
    bkind = "branch" if side == "ac" else "dcbranch"
    for k, br in enumerate(branches):
        if br.from_bus == bid:
            incident.append((bkind, branches, k, "from_bus"))
        if br.to_bus == bid:
            incident.append((bkind, branches, k, "to_bus"))
    if side == "ac":
        incident += [("gen", gens, k, "bus") for k, g in enumerate(gens) if g.bus == bid and not g.is_null]
        incident += [("load", loads, k, "bus") for k, ld in enumerate(loads)
                     if ld.bus == bid and (ld.p != 0 or ld.q != 0)]
        incident += [("conv", convs, k, "ac_bus") for k, c in enumerate(convs) if c.ac_bus == bid]
    else:
        incident += [("conv", convs, k, "dc_bus") for k, c in enumerate(convs) if c.dc_bus == bid]
    for k, s in enumerate(switches):
        if s.side == side:
            if s.from_bus == bid:
                incident.append(("switch", switches, k, "from_bus"))
            if s.to_bus == bid:
                incident.append(("switch", switches, k, "to_bus"))

    coupler_id = next_sw
    next_sw += 1
    total = 0.0
    new_switches = []
    for kind, seq, k, attr in incident:
        term = new_bus("terminal")
        new_buses.append(term)
        elem = seq[k]
        seq[k] = dataclasses.replace(elem, **{attr: term.id})
        rating = _element_rating(kind, elem, net)
        rating = rating if math.isfinite(rating) else _finite_fallback(net)
        total += rating
        qb = rating if side == "ac" else 0.0
        a_id, b_id = next_sw, next_sw + 1
        next_sw += 2
        new_switches.append(Switch(a_id, side, term.id, bid, "reconnection", b_id, coupler_id,
                                   -rating, rating, -qb, qb))
        new_switches.append(Switch(b_id, side, term.id, aux.id, "reconnection", a_id, coupler_id,
                                   -rating, rating, -qb, qb))
    total = total if total > 0 else _finite_fallback(net)
    # round up to a micro-MW grid so a case file in MW stores the rating exactly
    total = math.ceil(total * net.base_mva * 1e6) / 1e6 / net.base_mva
    qc = total if side == "ac" else 0.0
    coupler = Switch(coupler_id, side, bid, aux.id, "coupler", None, None, -total, total, -qc, qc)
    switches = switches + [coupler] + new_switches

    if side == "ac":
        return net.replace(ac_buses=net.ac_buses + tuple(new_buses), ac_branches=tuple(branches),
                           generators=tuple(gens), loads=tuple(loads), converters=tuple(convs),
                           switches=tuple(switches))
    return net.replace(dc_buses=net.dc_buses + tuple(new_buses), dc_branches=tuple(branches),
                       converters=tuple(convs), switches=tuple(switches))


def _finite_fallback(net: Network) -> float:
    return max(1.0, sum(g.p_max for g in net.generators if math.isfinite(g.p_max)))


def add_slack_recourse(net: Network, cost_multiplier: float) -> Network:
    """Add one expensive generator per AC bus standing in for load curtailment.

    Capacity equals the bus demand; the linear cost is ``cost_multiplier``
    times the largest linear cost among existing units.
    """
    if not cost_multiplier > 1:
        raise ValueError("cost_multiplier must exceed 1")
    if not net.ac_buses:
        return net
    c1 = cost_multiplier * max((g.c1 for g in net.generators), default=1.0)
    demand = net.bus_demand()
    next_id = max((g.id for g in net.generators), default=0) + 1
    extra = []
    for k, b in enumerate(net.ac_buses):
        pd, qd = demand.get(b.id, (0.0, 0.0))
        extra.append(Generator(id=next_id + k, bus=b.id, p_min=0.0, p_max=max(pd, 0.0),
                               q_min=min(0.0, qd), q_max=max(0.0, qd), c2=0.0, c1=c1, c0=0.0,
                               is_slack_recourse=True))
    return net.replace(generators=net.generators + tuple(extra))
