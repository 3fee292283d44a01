"""Linearized AC/DC topology-optimization model (LPAC) as a mixed-integer program.

For every timestep ``t`` and scenario ``w`` the model carries voltage angle
``theta`` and magnitude deviation ``phi`` (``|V| = 1 + phi``) per AC bus,
a cosine surrogate ``cs`` per AC branch, converter and DC quantities, and
switch flows.  Switch status binaries ``z[s, t]`` are shared by all
scenarios of a timestep.  Intertemporal modes tie the binaries together
across timesteps: one topology for the whole horizon, or a budget of
switching slots.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import pandas as pd

from .mip import EQ, GE, LE, MipBuilder, MipInstance, MipSolution, get_backend, solve
from .network import Network, NetworkError
from .scenario import ScenarioSet

CONVERTER_FACETS = 8


class ModelError(ValueError):
    pass


class IntegralityError(ModelError):
    pass


# -- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class Mode:
    kind: str  # "opf" | "hourly" | "one" | "limited"
    s_max: int = 0
    s_dc_max: int = 0

    def __post_init__(self):
        if self.kind not in ("opf", "hourly", "one", "limited"):
            raise ModelError(f"unknown mode {self.kind!r}")
        if self.s_max < 0 or self.s_dc_max < 0:
            raise ModelError("switching budgets must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "Mode":
        """``opf``, ``hourly``, ``one``, ``limited:S`` or ``limited:S:Sdc``.

        The table names ``OPF``, ``HourlyBS``, ``OneTopology``, ``UpToOne``
        and ``UpToTwo`` are accepted as well; the budgets apply to AC and DC.
        """
        t = text.strip().lower()
        alias = {"opf": "opf", "plainopf": "opf", "hourlybs": "hourly", "hourly": "hourly",
                 "onetopology": "one", "one": "one", "uptoone": "limited:1", "uptotwo": "limited:2"}
        t = alias.get(t, t)
        if t.startswith("limited"):
            parts = t.split(":")
            try:
                s = int(parts[1]) if len(parts) > 1 else 1
                sdc = int(parts[2]) if len(parts) > 2 else s
            except ValueError as exc:
                raise ModelError(f"bad mode {text!r}") from exc
            return cls("limited", s, sdc)
        return cls(t)

    @property
    def label(self) -> str:
        if self.kind == "limited":
            return f"limited:{self.s_max}:{self.s_dc_max}"
        return self.kind


@dataclass(frozen=True)
class ModelConfig:
    mode: Mode = Mode("opf")
    horizon: int | None = None
    allow_ots: bool = False
    switch_cost: float = 0.0
    cosine_cuts: int = 11
    cost_segments: int = 8
    gap: float = 1e-3

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.horizon is not None and self.horizon < 1:
            raise ModelError("horizon must be at least 1")
        if self.cosine_cuts < 2:
            raise ModelError("cosine_cuts must be at least 2")
        if self.cost_segments < 1:
            raise ModelError("cost_segments must be at least 1")
        if not self.gap >= 0:
            raise ModelError("gap must be nonnegative")


# -- linearizations ------------------------------------------------------------

def cosine_kappa(dtheta_max: float) -> float:
    return (1.0 - math.cos(dtheta_max)) / dtheta_max**2


def cosine_cuts(dtheta_max: float, n: int) -> list[tuple[float, float]]:
    """Tangent cuts ``cs <= a + s * dtheta`` to ``cs <= 1 - kappa dtheta^2``.

    The tangent points are ``n`` equally spaced angle differences in
    ``[-dtheta_max, dtheta_max]``.  Returns ``(a, s)`` pairs; callers add
    the box ``cos(dtheta_max) <= cs <= 1``.
    """
    if n < 2:
        raise ModelError("at least two cosine cuts are required")
    k = cosine_kappa(dtheta_max)
    pts = np.linspace(-dtheta_max, dtheta_max, n)
    return [(1.0 + k * d * d, -2.0 * k * d) for d in pts]


def cosine_cut_error_bound(dtheta_max: float, n: int) -> float:
    """Largest gap between the cut envelope and the quadratic on the interval.

    Adjacent tangents of ``1 - kappa d^2`` spaced ``h`` apart meet at the
    midpoint, where they exceed the parabola by ``kappa h^2 / 4``; with
    ``h = 2 dtheta_max / (n - 1)`` that is ``kappa dtheta_max^2 / (n - 1)^2``.
    """
    return cosine_kappa(dtheta_max) * dtheta_max**2 / (n - 1) ** 2


def pwl_cost(c2: float, c1: float, c0: float, p_min: float, p_max: float,
             segments: int) -> list[tuple[float, float]]:
    """Tangent lines ``y >= a + s * P`` under-approximating the quadratic cost.

    Tangents are taken at ``segments + 1`` equally spaced breakpoints, so
    the envelope touches the quadratic at every breakpoint and falls below
    it by at most ``c2 * h^2 / 4`` with ``h = (p_max - p_min) / segments``.
    """
    if segments < 1:
        raise ModelError("segments must be at least 1")
    if c2 < 0:
        raise ModelError("cost must be convex")
    if c2 == 0:
        return [(c0, c1)]
    if not math.isfinite(p_max - p_min):
        raise ModelError("quadratic cost needs finite generator limits")
    if p_max <= p_min:
        return [(c0 - c2 * p_min * p_min, c1 + 2 * c2 * p_min)]
    pts = np.linspace(p_min, p_max, segments + 1)
    return [(c0 - c2 * p * p, c1 + 2 * c2 * p) for p in pts]


def pwl_error_bound(c2: float, p_min: float, p_max: float, segments: int) -> float:
    if c2 == 0 or p_max <= p_min:
        return 0.0
    return c2 * ((p_max - p_min) / segments) ** 2 / 4.0


# -- layout and plans --------------------------------------------------------------

@dataclass
class VariableLayout:
    """Column index of every model quantity.

    Keys are tuples ``(kind, entity, t, w)`` for continuous quantities,
    ``("z", switch_id, t)`` for switch binaries and ``("s", side, t)`` for
    switching slots.  ``t`` is the global timestep of the instance.
    """

    index: dict[tuple, int]
    timesteps: tuple[int, ...]
    n_scenarios: int
    switch_ids: tuple[int, ...]
    weights: np.ndarray  # scenario probabilities [local t, w]
    linearization_bound: float = 0.0  # total PWL cost under-approximation bound

    def col(self, *key) -> int:
        return self.index[key]

    def get(self, x: np.ndarray, *key) -> float:
        return float(x[self.index[key]])

    def z_cols(self) -> np.ndarray:
        return np.array([[self.index[("z", s, t)] for s in self.switch_ids] for t in self.timesteps],
                        dtype=int).reshape(len(self.timesteps), len(self.switch_ids))

    def series(self, x: np.ndarray, kind: str, w: int = 0) -> pd.DataFrame:
        """Values of one quantity as a (timestep x entity) frame for scenario ``w``."""
        data: dict = {}
        for key, j in self.index.items():
            if key[0] == kind and len(key) == 4 and key[3] == w:
                data.setdefault(key[1], {})[key[2]] = x[j]
        return pd.DataFrame(data).sort_index(axis=1)


@dataclass(frozen=True, eq=False)
class TopologyPlan:
    """``status[t, k]`` is True when switch ``switch_ids[k]`` is closed at timestep ``t``."""

    switch_ids: tuple[int, ...]
    status: np.ndarray
    sides: tuple[str, ...] = ()
    integrality_residual: float = 0.0

    def __post_init__(self):
        st = np.asarray(self.status, bool)
        if st.ndim != 2:
            st = st.reshape(-1, len(self.switch_ids))
        object.__setattr__(self, "status", st)

    @property
    def horizon(self) -> int:
        return self.status.shape[0]

    @classmethod
    def original(cls, net: Network, horizon: int) -> "TopologyPlan":
        ids = tuple(s.id for s in net.switches)
        row = np.array([original_status(net, s.id) for s in net.switches], bool)
        return cls(ids, np.tile(row, (horizon, 1)), tuple(s.side for s in net.switches))

    def at(self, t: int) -> dict[int, bool]:
        return dict(zip(self.switch_ids, map(bool, self.status[t])))

    def changes(self, side: str | None = None) -> np.ndarray:
        """Number of switches changing status between ``t-1`` and ``t`` (first entry 0)."""
        st = self.status
        if side is not None:
            st = st[:, [k for k, s in enumerate(self.sides) if s == side]]
        out = np.zeros(self.horizon, dtype=int)
        if self.horizon > 1 and st.shape[1]:
            out[1:] = (st[1:] != st[:-1]).sum(axis=1)
        return out

    def action_count(self, side: str | None = None) -> int:
        """Timesteps at which at least one switch changes (one slot each)."""
        return int((self.changes(side) > 0).sum())

    def concat(self, other: "TopologyPlan") -> "TopologyPlan":
        if other.switch_ids != self.switch_ids:
            raise ModelError("plans cover different switches")
        return TopologyPlan(self.switch_ids, np.vstack([self.status, other.status]), self.sides,
                            max(self.integrality_residual, other.integrality_residual))

    def slice(self, t: int) -> "TopologyPlan":
        return TopologyPlan(self.switch_ids, self.status[t:t + 1], self.sides)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(np.where(self.status, "closed", "open"),
                          columns=[f"sw{s}" for s in self.switch_ids])
        df.insert(0, "t", range(self.horizon))
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, sides: tuple[str, ...] = ()) -> "TopologyPlan":
        cols = [c for c in df.columns if c.startswith("sw")]
        return cls(tuple(int(c[2:]) for c in cols), (df[cols] == "closed").to_numpy(), sides)


def original_status(net: Network, switch_id: int) -> bool:
    """Status reproducing the unsplit busbar: couplers closed, elements on the original half."""
    s = net.switch(switch_id)
    if s.kind == "coupler":
        return True
    return s.to_bus == net.switch(s.coupler).from_bus


def extract_topology(sol: MipSolution, layout: VariableLayout, net: Network | None = None) -> TopologyPlan:
    if sol.x is None or sol.status not in ("optimal", "feasible", "time_limit"):
        raise ModelError(f"no solution to extract a topology from (status {sol.status})")
    zc = layout.z_cols()
    z = sol.x[zc] if zc.size else np.zeros(zc.shape)
    bad = (z > 0.1) & (z < 0.9)
    if bad.any():
        t, k = map(int, np.argwhere(bad)[0])
        raise IntegralityError(f"switch {layout.switch_ids[k]} at t={layout.timesteps[t]} "
                               f"has fractional status {z[t, k]:.3f}")
    resid = float(np.abs(z - np.round(z)).max(initial=0.0))
    sides = tuple(net.switch(s).side for s in layout.switch_ids) if net is not None else ()
    return TopologyPlan(layout.switch_ids, z > 0.5, sides, resid)


# -- model construction -------------------------------------------------------------

def _scaled_pmax(g, cf: float) -> float:
    return g.p_max * cf if g.is_wind else g.p_max


def _check_inputs(net: Network, scen: ScenarioSet, cfg: ModelConfig) -> None:
    if cfg.horizon is not None and cfg.horizon != scen.horizon:
        raise ModelError(f"scenario set covers {scen.horizon} timesteps, config asks for {cfg.horizon}")
    if scen.n_scenarios > 1 and not net.wind_generators:
        raise ModelError("wind scenarios given for a network without wind generators")
    for g in net.generators:
        if g.c2 > 0 and not math.isfinite(g.p_max - g.p_min):
            raise NetworkError(f"generator {g.id}: quadratic cost needs finite limits")


def build(net: Network, scen: ScenarioSet, cfg: ModelConfig,
          timesteps: Iterable[int] | None = None,
          fixed: TopologyPlan | None = None) -> tuple[MipInstance, VariableLayout]:
    """Assemble the model over the given timesteps of ``scen`` (default: all).

    ``fixed`` pins every switch binary to a plan (rows of the plan follow
    ``timesteps``); mode ``opf`` pins them to the original topology.
    """
    _check_inputs(net, scen, cfg)
    ts = tuple(range(scen.horizon)) if timesteps is None else tuple(timesteps)
    W = scen.n_scenarios
    mb = MipBuilder(f"{net.name[:6]}")
    idx: dict[tuple, int] = {}

    def var(key, lb, ub, binary=False):
        name = "_".join(str(k) for k in key[:2]) + "".join(
            f"_{p}{v}" for p, v in zip("tw", key[2:]))
        j = mb.var(name, lb, ub, binary, meta=key)
        idx[key] = j
        return j

    def row(key, terms, sense, rhs):
        name = "_".join(str(k) for k in key[:2]) + "".join(f"_{p}{v}" for p, v in zip("tw", key[2:]))
        cols = list(terms.keys())
        return mb.row(name, cols, [terms[c] for c in cols], sense, rhs)

    sw_ids = tuple(s.id for s in net.switches)
    if fixed is not None:
        if fixed.switch_ids != sw_ids or fixed.horizon != len(ts):
            raise ModelError("fixed plan does not match the switches or timesteps of the model")
        pinned = fixed.status
    elif cfg.mode.kind == "opf":
        pinned = TopologyPlan.original(net, len(ts)).status
    else:
        pinned = None

    # switch binaries, shared across scenarios
    for lt, t in enumerate(ts):
        for k, s in enumerate(net.switches):
            v = None if pinned is None else float(pinned[lt, k])
            var(("z", s.id, t), 0.0 if v is None else v, 1.0 if v is None else v, binary=True)

    weights = scen.probs[list(ts)]
    lin_bound = 0.0
    gen_lines = {}
    for g in net.generators:
        if g.c2 > 0:
            lines = pwl_cost(g.c2, g.c1, g.c0, g.p_min, g.p_max, cfg.cost_segments)
            gen_lines[g.id] = lines
            lin_bound += pwl_error_bound(g.c2, g.p_min, g.p_max, cfg.cost_segments) * len(ts)

    cuts = {br.id: cosine_cuts(br.dtheta_max, cfg.cosine_cuts) for br in net.ac_branches}

    for lt, t in enumerate(ts):
        for w in range(W):
            cf = float(scen.values[t, w])
            om = float(weights[lt, w])
            th = {b.id: var(("th", b.id, t, w), 0.0 if b.is_reference else b.amin,
                            0.0 if b.is_reference else b.amax) for b in net.ac_buses}
            ph = {b.id: var(("ph", b.id, t, w), b.vmin - 1.0, b.vmax - 1.0) for b in net.ac_buses}
            pbal = {b.id: {} for b in net.ac_buses}
            qbal = {b.id: {} for b in net.ac_buses}
            prhs = {b.id: 0.0 for b in net.ac_buses}
            qrhs = {b.id: 0.0 for b in net.ac_buses}

            def add(d, bus, col, coef):
                d[bus][col] = d[bus].get(col, 0.0) + coef

            # generators and cost
            for g in net.generators:
                pmax = _scaled_pmax(g, cf)
                pg = var(("pg", g.id, t, w), min(g.p_min, pmax), pmax)
                qg = var(("qg", g.id, t, w), g.q_min, g.q_max)
                add(pbal, g.bus, pg, 1.0)
                add(qbal, g.bus, qg, 1.0)
                if g.id in gen_lines:
                    y = var(("cg", g.id, t, w), -np.inf, np.inf)
                    mb.cost(y, om)
                    for n, (a, s) in enumerate(gen_lines[g.id]):
                        row(("pwl", f"{g.id}c{n}", t, w), {y: 1.0, pg: -s}, GE, a)
                else:
                    mb.cost(pg, om * g.c1)
                    mb.c0 += om * g.c0
            for ld in net.loads:
                prhs[ld.bus] += ld.p
                qrhs[ld.bus] += ld.q

            # AC branches
            for br in net.ac_branches:
                i, j = br.from_bus, br.to_bus
                g_, b_, bs = br.g, br.b, br.b_s
                cs = var(("cs", br.id, t, w), math.cos(br.dtheta_max), 1.0)
                pf = var(("pf", br.id, t, w), -br.p_max, br.p_max)
                pt = var(("pt", br.id, t, w), -br.p_max, br.p_max)
                qf = var(("qf", br.id, t, w), -br.q_max, br.q_max)
                qt = var(("qt", br.id, t, w), -br.q_max, br.q_max)
                # p_fr = g(1+2phi_i) - g(cs+phi_i+phi_j) - b(th_i-th_j)
                row(("pfe", br.id, t, w), {pf: 1.0, ph[i]: -g_, ph[j]: g_, cs: g_,
                                           th[i]: b_, th[j]: -b_}, EQ, g_)
                row(("pte", br.id, t, w), {pt: 1.0, ph[j]: -g_, ph[i]: g_, cs: g_,
                                           th[j]: b_, th[i]: -b_}, EQ, g_)
                # q_fr = -(b+bs)(1+2phi_i) + b(cs+phi_i+phi_j) - g(th_i-th_j)
                row(("qfe", br.id, t, w), {qf: 1.0, ph[i]: 2 * (b_ + bs) - b_, ph[j]: -b_, cs: -b_,
                                           th[i]: g_, th[j]: -g_}, EQ, -(b_ + bs))
                row(("qte", br.id, t, w), {qt: 1.0, ph[j]: 2 * (b_ + bs) - b_, ph[i]: -b_, cs: -b_,
                                           th[j]: g_, th[i]: -g_}, EQ, -(b_ + bs))
                row(("dth", br.id, t, w), {th[i]: 1.0, th[j]: -1.0}, LE, br.dtheta_max)
                row(("dtl", br.id, t, w), {th[i]: 1.0, th[j]: -1.0}, GE, -br.dtheta_max)
                for n, (a, s) in enumerate(cuts[br.id]):
                    row(("cut", f"{br.id}c{n}", t, w), {cs: 1.0, th[i]: -s, th[j]: s}, LE, a)
                add(pbal, i, pf, -1.0)
                add(pbal, j, pt, -1.0)
                add(qbal, i, qf, -1.0)
                add(qbal, j, qt, -1.0)

            # DC side
            dph = {b.id: var(("phdc", b.id, t, w), b.vmin - 1.0, b.vmax - 1.0) for b in net.dc_buses}
            dbal = {b.id: {} for b in net.dc_buses}
            for br in net.dc_branches:
                p = var(("pdc", br.id, t, w), br.p_min, br.p_max)
                yy = br.poles * br.y
                row(("dcf", br.id, t, w), {p: 1.0, dph[br.from_bus]: -yy, dph[br.to_bus]: yy}, EQ, 0.0)
                add(dbal, br.from_bus, p, -1.0)
                add(dbal, br.to_bus, p, 1.0)
            for c in net.converters:
                sm = c.s_max
                pac = var(("pac", c.id, t, w), -sm, sm)
                qac = var(("qac", c.id, t, w), -sm, sm)
                pdc_lim = sm + c.loss_a + c.loss_b * sm
                pdc = var(("pcdc", c.id, t, w), -pdc_lim, pdc_lim)
                cur = var(("ic", c.id, t, w), 0.0, sm)
                row(("cls", c.id, t, w), {pac: 1.0, pdc: 1.0, cur: -c.loss_b}, EQ, c.loss_a)
                for n in range(CONVERTER_FACETS):
                    a = 2 * math.pi * n / CONVERTER_FACETS
                    row(("cim", f"{c.id}d{n}", t, w), {cur: 1.0, pac: -math.cos(a), qac: -math.sin(a)},
                        GE, 0.0)
                    a2 = (2 * n + 1) * math.pi / CONVERTER_FACETS
                    row(("ccap", f"{c.id}d{n}", t, w), {pac: math.cos(a2), qac: math.sin(a2)}, LE,
                        sm * math.cos(math.pi / CONVERTER_FACETS))
                add(pbal, c.ac_bus, pac, -1.0)
                add(qbal, c.ac_bus, qac, -1.0)
                add(dbal, c.dc_bus, pdc, -1.0)

            # switches
            for s in net.switches:
                z = idx[("z", s.id, t)]
                p = var(("psw", s.id, t, w), min(s.p_min, 0.0), max(s.p_max, 0.0))
                row(("swpu", s.id, t, w), {p: 1.0, z: -s.p_max}, LE, 0.0)
                row(("swpl", s.id, t, w), {p: 1.0, z: -s.p_min}, GE, 0.0)
                if s.side == "ac":
                    q = var(("qsw", s.id, t, w), min(s.q_min, 0.0), max(s.q_max, 0.0))
                    row(("swqu", s.id, t, w), {q: 1.0, z: -s.q_max}, LE, 0.0)
                    row(("swql", s.id, t, w), {q: 1.0, z: -s.q_min}, GE, 0.0)
                    M = net.big_m_theta
                    a, b = th[s.from_bus], th[s.to_bus]
                    row(("swtu", s.id, t, w), {a: 1.0, b: -1.0, z: M}, LE, M)
                    row(("swtl", s.id, t, w), {a: 1.0, b: -1.0, z: -M}, GE, -M)
                    M = net.big_m_phi
                    a, b = ph[s.from_bus], ph[s.to_bus]
                    row(("swvu", s.id, t, w), {a: 1.0, b: -1.0, z: M}, LE, M)
                    row(("swvl", s.id, t, w), {a: 1.0, b: -1.0, z: -M}, GE, -M)
                    add(pbal, s.from_bus, p, -1.0)
                    add(pbal, s.to_bus, p, 1.0)
                    add(qbal, s.from_bus, q, -1.0)
                    add(qbal, s.to_bus, q, 1.0)
                else:
                    M = net.big_m_dc
                    a, b = dph[s.from_bus], dph[s.to_bus]
                    row(("swdu", s.id, t, w), {a: 1.0, b: -1.0, z: M}, LE, M)
                    row(("swdl", s.id, t, w), {a: 1.0, b: -1.0, z: -M}, GE, -M)
                    add(dbal, s.from_bus, p, -1.0)
                    add(dbal, s.to_bus, p, 1.0)

            for b in net.ac_buses:
                row(("pbal", b.id, t, w), pbal[b.id], EQ, prhs[b.id])
                row(("qbal", b.id, t, w), qbal[b.id], EQ, qrhs[b.id])
            for b in net.dc_buses:
                row(("dbal", b.id, t, w), dbal[b.id], EQ, 0.0)

        # per-timestep switch logic
        for s in net.switches:
            z = idx[("z", s.id, t)]
            if s.kind == "coupler":
                if cfg.switch_cost:
                    mb.cost(z, cfg.switch_cost)
                continue
            if s.id < s.partner:
                zp = idx[("z", s.partner, t)]
                row(("excl", s.id, t), {z: 1.0, zp: 1.0}, LE if cfg.allow_ots else EQ, 1.0)
            cpl = net.switch(s.coupler)
            if s.to_bus != cpl.from_bus:
                row(("cimp", s.id, t), {z: 1.0, idx[("z", cpl.id, t)]: 1.0}, LE, 1.0)

    # intertemporal coupling
    mode = cfg.mode.kind
    if pinned is None and len(ts) > 1 and mode in ("one", "limited"):
        for s in net.switches:
            for a, b in zip(ts[:-1], ts[1:]):
                za, zb = idx[("z", s.id, a)], idx[("z", s.id, b)]
                if mode == "one":
                    row(("same", s.id, b), {zb: 1.0, za: -1.0}, EQ, 0.0)
        if mode == "limited":
            for side, budget in (("ac", cfg.mode.s_max), ("dc", cfg.mode.s_dc_max)):
                sws = [s for s in net.switches if s.side == side]
                if not sws:
                    continue
                slots = []
                for a, b in zip(ts[:-1], ts[1:]):
                    sl = var(("s", side, b), 0.0, 1.0, binary=True)
                    slots.append(sl)
                    for s in sws:
                        za, zb = idx[("z", s.id, a)], idx[("z", s.id, b)]
                        row(("chu", f"{side}{s.id}", b), {zb: 1.0, za: -1.0, sl: -1.0}, LE, 0.0)
                        row(("chl", f"{side}{s.id}", b), {zb: 1.0, za: -1.0, sl: 1.0}, GE, 0.0)
                row(("budget", side), {sl: 1.0 for sl in slots}, LE, float(budget))

    inst = mb.build()
    layout = VariableLayout(idx, ts, W, sw_ids, weights, lin_bound)
    return inst, layout


def build_instances(net: Network, scen: ScenarioSet, cfg: ModelConfig,
                    fixed: TopologyPlan | None = None) -> list[tuple[MipInstance, VariableLayout]]:
    """One instance per independent block: per hour in ``hourly`` mode, otherwise one."""
    if cfg.mode.kind == "hourly":
        return [build(net, scen, cfg, [t], None if fixed is None else fixed.slice(t))
                for t in range(scen.horizon)]
    return [build(net, scen, cfg, None, fixed)]


# -- solving -------------------------------------------------------------------------

@dataclass
class ModelResult:
    """Outcome of solving all blocks of a model."""

    objective: float
    plan: TopologyPlan
    solutions: list[MipSolution]
    layouts: list[VariableLayout]
    instances: list[MipInstance] = field(repr=False, default_factory=list)

    @property
    def wall_times(self) -> list[float]:
        return [s.wall_time for s in self.solutions]

    @property
    def status(self) -> str:
        st = {s.status for s in self.solutions}
        for bad in ("infeasible", "unbounded", "time_limit", "feasible"):
            if bad in st:
                return bad
        return "optimal"

    @property
    def mip_gap(self) -> float:
        return max((s.mip_gap for s in self.solutions), default=0.0)

    @property
    def linearization_bound(self) -> float:
        return sum(l.linearization_bound for l in self.layouts)


def original_start(m: MipInstance, layout: VariableLayout, net: Network,
                   backend: str | None = None) -> np.ndarray | None:
    """Feasible point with the original topology at every timestep, if one exists.

    Used as the initial incumbent so that ties resolve to the original
    topology rather than to an equivalent rearrangement.
    """
    lb, ub = m.lb.copy(), m.ub.copy()
    orig = TopologyPlan.original(net, len(layout.timesteps)).status
    zc = layout.z_cols()
    lb[zc] = ub[zc] = orig.astype(float)
    for key, j in layout.index.items():
        if key[0] == "s":
            lb[j] = ub[j] = 0.0
    sol = solve(m.relaxed().with_bounds(lb, ub), backend, 0.0)
    if sol.x is None:
        return None
    x = sol.x.copy()
    x[m.binary] = np.round(x[m.binary])
    return x


def solve_model(net: Network, scen: ScenarioSet, cfg: ModelConfig, backend: str | None = None,
                time_limit: float | None = None, fixed: TopologyPlan | None = None,
                warm_start: bool = True, method: str = "mip",
                table: CostTable | None = None) -> ModelResult:
    """Solve the model with the MIP backend (``method="mip"``) or by decomposition.

    ``method="decompose"`` gives the same optimum through
    :func:`solve_decomposed`, which is far cheaper when many scenarios
    share the switch binaries of a timestep.
    """
    if method == "decompose":
        return solve_decomposed(net, scen, cfg, backend, fixed, table)
    if method != "mip":
        raise ModelError(f"unknown solve method {method!r}")
    blocks = build_instances(net, scen, cfg, fixed)
    sols, plans = [], []
    for m, layout in blocks:
        x0 = original_start(m, layout, net, backend) if warm_start and m.n_binaries else None
        sol = solve(m, backend, cfg.gap, time_limit, initial=x0)
        if sol.x is None:
            raise ModelError(f"model block starting at t={layout.timesteps[0]} has no solution "
                             f"(status {sol.status})")
        sols.append(sol)
        plans.append(extract_topology(sol, layout, net))
    plan = plans[0]
    for p in plans[1:]:
        plan = plan.concat(p)
    obj = float(sum(s.objective for s in sols))
    return ModelResult(obj, plan, sols, [l for _, l in blocks], [m for m, _ in blocks])


MAX_STEP_SWITCHES = 22


def _single_step(cfg: ModelConfig) -> ModelConfig:
    return replace(cfg, mode=Mode("hourly"), horizon=1)


def step_assignments(net: Network, cfg: ModelConfig) -> np.ndarray:
    """Switch statuses of one timestep allowed by the rows among binaries alone.

    Those rows are exclusivity and coupler implication; an assignment that
    passes them may still be infeasible for the continuous part, which
    the block LPs detect.  Returns a (K, n_switches) boolean array.
    """
    m, layout = build(net, ScenarioSet.deterministic([1.0]), _single_step(cfg))
    zc = layout.z_cols()[0]
    n = len(zc)
    if n > MAX_STEP_SWITCHES:
        raise ModelError(f"{n} switches per timestep are too many to decompose; use method='mip'")
    A = m.A.tocsr()
    other = np.ones(m.n_vars, bool)
    other[zc] = False
    pure = np.flatnonzero((np.abs(A[:, other]).sum(axis=1).A1 == 0) & (A.getnnz(axis=1) > 0))
    grid = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    lo, hi = m.row_bounds()
    act = grid @ A[pure][:, zc].toarray().T
    ok = ((act >= lo[pure] - 1e-9) & (act <= hi[pure] + 1e-9)).all(axis=1)
    return grid[ok].astype(bool)


def _bare(net: Network, bus: int, side: str) -> bool:
    if side == "dc":
        return (not any(c.dc_bus == bus for c in net.converters)
                and not any(bus in (b.from_bus, b.to_bus) for b in net.dc_branches))
    return (not any(g.bus == bus and not g.is_null for g in net.generators)
            and not any(l.bus == bus and (l.p or l.q) for l in net.loads)
            and not any(c.ac_bus == bus for c in net.converters)
            and not any(bus in (b.from_bus, b.to_bus) for b in net.ac_branches))


def mirror_classes(net: Network, assignments: np.ndarray) -> np.ndarray:
    """Index of a representative for every assignment, up to swapping busbar halves.

    When both halves of a split busbar are bare and share their bounds,
    moving every element to the opposite half yields the same network up
    to relabeling, so one LP covers both assignments.
    """
    col = {s.id: k for k, s in enumerate(net.switches)}
    groups = []
    for c in net.switches:
        if c.kind != "coupler":
            continue
        if c.side == "ac":
            a, b = net.ac_bus(c.from_bus), net.ac_bus(c.to_bus)
            same = (a.vmin, a.vmax, a.amin, a.amax, a.vm0) == (b.vmin, b.vmax, b.amin, b.amax, b.vm0)
            same = same and not a.is_reference and not b.is_reference
        else:
            a, b = net.dc_bus(c.from_bus), net.dc_bus(c.to_bus)
            same = (a.vmin, a.vmax) == (b.vmin, b.vmax)
        if not (same and _bare(net, c.from_bus, c.side) and _bare(net, c.to_bus, c.side)):
            continue
        pairs = [(col[s.id], col[s.partner]) for s in net.switches
                 if s.kind == "reconnection" and s.coupler == c.id and s.to_bus == c.from_bus]
        groups.append(np.array(pairs, dtype=int))
    canon = assignments.copy()
    for pairs in groups:
        cols = pairs.reshape(-1)
        mirrored = assignments[:, pairs[:, ::-1].reshape(-1)]
        own = assignments[:, cols]
        # lexicographic comparison of the group bits, own vs mirrored
        diff = own != mirrored
        first = diff.argmax(axis=1)
        flip = diff.any(axis=1) & mirrored[np.arange(len(own)), first] & ~own[np.arange(len(own)), first]
        canon[np.ix_(flip, cols)] = mirrored[flip]
    _, rep_of_class, inverse = np.unique(canon, axis=0, return_index=True, return_inverse=True)
    return rep_of_class[inverse.reshape(-1)]


class _Block:
    """One (timestep, scenario) LP evaluated under many fixed topologies."""

    def __init__(self, net: Network, cf: float, cfg: ModelConfig, backend: str | None):
        self.m, self.layout = build(net, ScenarioSet.deterministic([cf]), _single_step(cfg))
        self.zc = self.layout.z_cols()[0]
        self.session = get_backend(backend).lp_session(self.m)

    def solve(self, status: np.ndarray) -> MipSolution:
        lb, ub = self.m.lb.copy(), self.m.ub.copy()
        lb[self.zc] = ub[self.zc] = status.astype(float)
        return self.session.solve(lb, ub)

    def costs(self, assignments: np.ndarray, rep: np.ndarray | None = None) -> np.ndarray:
        """Optimal value for each assignment; ``rep`` maps each to an equivalent one."""
        rep = np.arange(len(assignments)) if rep is None else rep
        out = np.full(len(assignments), np.inf)
        for k in np.unique(rep):
            sol = self.solve(assignments[k])
            if sol.x is not None and sol.status == "optimal":
                out[k] = sol.objective
        return out[rep]


def _choose_path(C: np.ndarray, assignments: np.ndarray, orig: int, mode: Mode,
                 sides: tuple[str, ...]) -> np.ndarray:
    """Topology index per timestep minimizing ``sum_t C[t, k_t]`` under the mode's rules.

    Ties go to the original topology: every other topology carries a
    negligible surcharge in the comparison.
    """
    T, K = C.shape
    finite = np.isfinite(C)
    scale = np.abs(C[finite]).mean() if finite.any() else 1.0
    Cb = C + 1e-10 * max(scale, 1.0) * (np.arange(K) != orig)
    if mode.kind == "hourly":
        return Cb.argmin(axis=1)
    if mode.kind in ("one", "opf"):
        return np.full(T, int(Cb.sum(axis=0).argmin()))
    sides_a = np.array(sides)
    diff = {}
    for side in ("ac", "dc"):
        cols = sides_a == side
        diff[side] = (assignments[:, None, cols] != assignments[None, :, cols]).any(axis=2)
    SA, SD = mode.s_max, mode.s_dc_max
    V = np.full((K, SA + 1, SD + 1), np.inf)
    V[:, 0, 0] = Cb[0]
    back = []
    for t in range(1, T):
        best = np.full((K, SA + 1, SD + 1), np.inf)
        arg = np.zeros((K, SA + 1, SD + 1, 3), dtype=int)
        for x in (0, 1):
            for y in (0, 1):
                mask = (diff["ac"] == bool(x)) & (diff["dc"] == bool(y))  # [k_prev, k]
                if not mask.any():
                    continue
                Vs = np.full_like(V, np.inf)
                Vs[:, x:, y:] = V[:, :SA + 1 - x, :SD + 1 - y]
                cand = np.where(mask[:, :, None, None], Vs[:, None], np.inf)  # [k_prev, k, a, d]
                kp = cand.argmin(axis=0)
                val = np.take_along_axis(cand, kp[None], axis=0)[0]
                better = val < best
                best = np.where(better, val, best)
                n_better = better.sum()
                arg[better] = np.stack([kp[better], np.full(n_better, x), np.full(n_better, y)], axis=1)
        V = best + Cb[t][:, None, None]
        back.append(arg)
    k, a, d = np.unravel_index(int(V.argmin()), V.shape)
    path = [k]
    for arg in reversed(back):
        kp, x, y = arg[k, a, d]
        k, a, d = kp, a - x, d - y
        path.append(k)
    return np.array(path[::-1])


@dataclass
class CostTable:
    """Expected LPAC cost ``costs[t, k]`` of topology ``assignments[k]`` at timestep ``t``.

    Entries are ``inf`` where the topology admits no dispatch.  Every mode
    is a path through this table, so one table serves all of them.
    """

    assignments: np.ndarray
    costs: np.ndarray
    original: int
    switch_ids: tuple[int, ...]
    sides: tuple[str, ...]
    wall_time: float = 0.0
    n_lps: int = 0

    @property
    def horizon(self) -> int:
        return self.costs.shape[0]

    def path(self, mode: Mode) -> np.ndarray:
        if mode.kind == "opf":
            if self.original < 0:
                raise ModelError("the original topology is not among the tabulated ones")
            return np.full(self.horizon, self.original)
        return _choose_path(self.costs, self.assignments, self.original, mode, self.sides)

    def plan(self, path: np.ndarray) -> TopologyPlan:
        return TopologyPlan(self.switch_ids, self.assignments[path], self.sides)


def cost_table(net: Network, scen: ScenarioSet, cfg: ModelConfig, backend: str | None = None,
               assignments: np.ndarray | None = None) -> CostTable:
    """Tabulate the expected cost of every allowed single-timestep topology.

    With every switch status fixed, the model falls apart into one small LP
    per (timestep, scenario).  Each such block is solved once per topology,
    skipping mirror images of split busbars, and blocks with equal capacity
    factors are shared.  ``assignments`` defaults to
    :func:`step_assignments`.
    """
    _check_inputs(net, scen, cfg)
    T, W = scen.horizon, scen.n_scenarios
    if assignments is None:
        assignments = step_assignments(net, cfg)
    assignments = np.asarray(assignments, bool)
    rep = mirror_classes(net, assignments)
    orig_status = TopologyPlan.original(net, 1).status[0]
    match = np.flatnonzero((assignments == orig_status).all(axis=1))
    t0 = time.perf_counter()
    cache: dict[float, np.ndarray] = {}
    C = np.zeros((T, len(assignments)))
    for t in range(T):
        for w in range(W):
            cf = float(scen.values[t, w])
            if cf not in cache:
                cache[cf] = _Block(net, cf, cfg, backend).costs(assignments, rep)
            C[t] += scen.probs[t, w] * cache[cf]
    return CostTable(assignments, C, int(match[0]) if match.size else -1,
                     tuple(s.id for s in net.switches), tuple(s.side for s in net.switches),
                     time.perf_counter() - t0, len(cache) * len(np.unique(rep)))


def solve_decomposed(net: Network, scen: ScenarioSet, cfg: ModelConfig, backend: str | None = None,
                     fixed: TopologyPlan | None = None, table: CostTable | None = None) -> ModelResult:
    """Exact solve exploiting that timesteps and scenarios couple only through binaries.

    The hourly mode takes the row minima of the :class:`CostTable`,
    one-topology its best column and the limited-actions mode a shortest
    path over (topology, actions used).  The dispatch is then recovered
    with one LP per timestep.  Pass ``table`` to reuse it across modes.
    """
    _check_inputs(net, scen, cfg)
    T = scen.horizon
    if fixed is not None:
        rows, inverse = np.unique(fixed.status, axis=0, return_inverse=True)
        table = cost_table(net, scen, cfg, backend, rows)
        path = inverse.reshape(-1)
    else:
        if table is None:
            rows = TopologyPlan.original(net, 1).status if cfg.mode.kind == "opf" else None
            table = cost_table(net, scen, cfg, backend, rows)
        path = table.path(cfg.mode)
    per_t = table.costs[np.arange(T), path]
    if not np.isfinite(per_t).all():
        raise ModelError(f"no feasible topology at t={int(np.flatnonzero(~np.isfinite(per_t))[0])}")
    plan = table.plan(path)

    # recover the dispatch: one LP per timestep with the chosen topology pinned
    sols, blocks = [], []
    hourly = replace(cfg, mode=Mode("hourly"))
    for t in range(T):
        m, layout = build(net, scen, hourly, [t], plan.slice(t))
        sol = solve(m.relaxed(), backend, 0.0)
        if sol.x is None:
            raise ModelError(f"no dispatch for the chosen topology at t={t} (status {sol.status})")
        sols.append(MipSolution(sol.status, sol.objective, sol.x, 0.0,
                                sol.wall_time + table.wall_time / T, sol.objective))
        blocks.append((m, layout))
    return ModelResult(float(per_t.sum()), plan, sols, [l for _, l in blocks], [m for m, _ in blocks])


def dispatch_from(sol: MipSolution, layout: VariableLayout, net: Network, w: int = 0) -> pd.DataFrame:
    """Generator active power of scenario ``w`` as a (timestep x generator id) frame."""
    return layout.series(sol.x, "pg", w)
