"""Exact AC/DC power flow and successive-linearization dispatch.

A topology plan is applied by merging every pair of buses joined by a
closed switch into one node and discarding open switches.  The resulting
grid is solved with a Newton-Raphson power flow over AC angles and
magnitudes, DC voltages and the active power of one DC-slack converter per
DC island.  Continuous dispatch problems (the feasibility check and the
redispatch) are solved by repeatedly linearizing the exact equations at a
converged power-flow state, solving an LP with a trust region, and
re-running the power flow at the new setpoints.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lpac import CONVERTER_FACETS, ModelConfig, TopologyPlan, build, original_status
from .mip import EQ, GE, LE, MipBuilder, solve
from .network import Network
from .scenario import ScenarioSet

MISMATCH_TOL = 1e-8
LIMIT_TOL = 1e-6
_EPS_S = 1e-12


class PowerFlowError(RuntimeError):
    pass


class InfeasibleTopologyError(PowerFlowError):
    """A load ends up in an island without any generation."""


# -- reduced grid -----------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.p = {i: i for i in items}

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


@dataclass
class Grid:
    """Bus-merged, island-checked, array-indexed view of a network under one topology."""

    net: Network
    ac_node: dict[int, int]  # original AC bus id -> node index (dead buses absent)
    dc_node: dict[int, int]
    node_bus: list[int]  # representative bus id per AC node
    dc_node_bus: list[int]
    vmin: np.ndarray
    vmax: np.ndarray
    refs: list[int]  # one reference node per AC island
    branches: list  # live AcBranch objects
    f: np.ndarray
    t: np.ndarray
    gens: list
    gen_node: np.ndarray
    Pd: np.ndarray
    Qd: np.ndarray
    dc_vmin: np.ndarray
    dc_vmax: np.ndarray
    dc_branches: list
    dcf: np.ndarray
    dct: np.ndarray
    dck: np.ndarray
    convs: list
    conv_ac: np.ndarray
    conv_dc: np.ndarray
    dc_slack: list[int]  # converter index per DC island (its P is a state)

    @property
    def nb(self):
        return len(self.node_bus)

    @property
    def nd(self):
        return len(self.dc_node_bus)

    @property
    def nc(self):
        return len(self.convs)

    @property
    def ng(self):
        return len(self.gens)

    @property
    def nl(self):
        return len(self.branches)

    # column layout of the full variable vector
    def cols(self):
        nb, nd, nc, ng = self.nb, self.nd, self.nc, self.ng
        o = np.cumsum([0, nb, nb, nd, nc, nc, ng, ng])
        return dict(va=slice(o[0], o[1]), vm=slice(o[1], o[2]), u=slice(o[2], o[3]),
                    pac=slice(o[3], o[4]), qac=slice(o[4], o[5]), pg=slice(o[5], o[6]),
                    qg=slice(o[6], o[7]), n=int(o[7]))

    def admittances(self):
        nb, nl = self.nb, self.nl
        if nl == 0:
            z = sp.csr_matrix((0, nb), dtype=complex)
            return sp.csr_matrix((nb, nb), dtype=complex), z, z, z, z
        ys = np.array([1.0 / complex(b.r, b.x) for b in self.branches])
        bc = np.array([b.b_charging for b in self.branches])
        ytt = ys + 0.5j * bc
        rows = np.arange(nl)
        Cf = sp.csr_matrix((np.ones(nl), (rows, self.f)), shape=(nl, nb))
        Ct = sp.csr_matrix((np.ones(nl), (rows, self.t)), shape=(nl, nb))
        Yf = sp.diags(ytt) @ Cf - sp.diags(ys) @ Ct
        Yt = -sp.diags(ys) @ Cf + sp.diags(ytt) @ Ct
        Ybus = (Cf.T @ Yf + Ct.T @ Yt).tocsr()
        return Ybus, Yf.tocsr(), Yt.tocsr(), Cf, Ct


def reduce_grid(net: Network, plan: TopologyPlan | dict | None = None, t: int = 0) -> Grid:
    """Merge buses joined by closed switches and drop dead islands.

    Raises InfeasibleTopologyError when a load is left without generation.
    """
    if plan is None:
        status = {s.id: original_status(net, s.id) for s in net.switches}
    elif isinstance(plan, TopologyPlan):
        status = plan.at(t)
    else:
        status = dict(plan)
    uf_ac = _UnionFind([b.id for b in net.ac_buses])
    uf_dc = _UnionFind([b.id for b in net.dc_buses])
    for s in net.switches:
        if status.get(s.id, False):
            (uf_ac if s.side == "ac" else uf_dc).union(s.from_bus, s.to_bus)

    # representative: lowest-id original busbar among the members, else lowest id
    def reps(buses, uf):
        groups = defaultdict(list)
        for b in buses:
            groups[uf.find(b.id)].append(b)
        out = {}
        for members in groups.values():
            pick = min((b for b in members if b.role == "busbar"), key=lambda b: b.id, default=None)
            pick = pick or min(members, key=lambda b: b.id)
            for b in members:
                out[b.id] = pick.id
        return out, groups

    ac_rep, ac_groups = reps(net.ac_buses, uf_ac)
    dc_rep, dc_groups = reps(net.dc_buses, uf_dc)

    # connectivity of merged nodes across AC branches, DC branches and converters
    keys = [("a", r) for r in set(ac_rep.values())] + [("d", r) for r in set(dc_rep.values())]
    comp = _UnionFind(keys)
    for br in net.ac_branches:
        comp.union(("a", ac_rep[br.from_bus]), ("a", ac_rep[br.to_bus]))
    for br in net.dc_branches:
        comp.union(("d", dc_rep[br.from_bus]), ("d", dc_rep[br.to_bus]))
    for c in net.converters:
        comp.union(("a", ac_rep[c.ac_bus]), ("d", dc_rep[c.dc_bus]))
    live_gen = defaultdict(float)
    for g in net.generators:
        if not g.is_null:
            live_gen[comp.find(("a", ac_rep[g.bus]))] += max(g.p_max, 0.0) + max(g.q_max, 0.0)
    has_load = set()
    for ld in net.loads:
        if ld.p != 0 or ld.q != 0:
            c = comp.find(("a", ac_rep[ld.bus]))
            if c not in live_gen:
                raise InfeasibleTopologyError(f"load {ld.id} at bus {ld.bus} is islanded from all generation")
            has_load.add(c)
    live = set(live_gen)

    def alive(kind, rep):
        return comp.find((kind, rep)) in live

    node_bus = sorted({r for r in ac_rep.values() if alive("a", r)})
    node_idx = {r: k for k, r in enumerate(node_bus)}
    ac_node = {b: node_idx[r] for b, r in ac_rep.items() if r in node_idx}
    dc_node_bus = sorted({r for r in dc_rep.values() if alive("d", r)})
    dnode_idx = {r: k for k, r in enumerate(dc_node_bus)}
    dc_node = {b: dnode_idx[r] for b, r in dc_rep.items() if r in dnode_idx}

    vmin = np.array([max(net.ac_bus(m.id).vmin for m in ac_groups[uf_ac.find(r)]) for r in node_bus])
    vmax = np.array([min(net.ac_bus(m.id).vmax for m in ac_groups[uf_ac.find(r)]) for r in node_bus])
    dvmin = np.array([max(m.vmin for m in dc_groups[uf_dc.find(r)]) for r in dc_node_bus])
    dvmax = np.array([min(m.vmax for m in dc_groups[uf_dc.find(r)]) for r in dc_node_bus])

    branches = [br for br in net.ac_branches if br.from_bus in ac_node]
    gens = [g for g in net.generators if g.bus in ac_node]
    Pd = np.zeros(len(node_bus))
    Qd = np.zeros(len(node_bus))
    for ld in net.loads:
        if ld.bus in ac_node:
            Pd[ac_node[ld.bus]] += ld.p
            Qd[ac_node[ld.bus]] += ld.q
    dcb = [br for br in net.dc_branches if br.from_bus in dc_node]
    convs = [c for c in net.converters if c.ac_bus in ac_node]

    # AC islands and their reference nodes
    isl = _UnionFind(range(len(node_bus)))
    for br in branches:
        isl.union(ac_node[br.from_bus], ac_node[br.to_bus])
    members = defaultdict(list)
    for k in range(len(node_bus)):
        members[isl.find(k)].append(k)
    gen_cap = defaultdict(float)
    for g in gens:
        if not g.is_null and not g.is_slack_recourse:
            gen_cap[ac_node[g.bus]] += g.p_max
    for g in gens:
        if not g.is_null:
            gen_cap[ac_node[g.bus]] += 1e-9 * g.p_max
    refs = []
    for root in sorted(members):
        ks = members[root]
        designated = [k for k in ks if any(net.ac_bus(m.id).is_reference
                                           for m in ac_groups[uf_ac.find(node_bus[k])])]
        ok = [k for k in designated if gen_cap.get(k, 0) > 0]
        if ok:
            refs.append(ok[0])
        elif any(gen_cap.get(k, 0) > 0 for k in ks):
            refs.append(max(ks, key=lambda k: (gen_cap.get(k, 0), -k)))
        else:
            raise PowerFlowError(f"AC island with bus {node_bus[ks[0]]} has no generator to act as slack")

    # one slack converter per DC island
    disl = _UnionFind(range(len(dc_node_bus)))
    for br in dcb:
        disl.union(dc_node[br.from_bus], dc_node[br.to_bus])
    dc_slack = []
    seen = set()
    for k, c in sorted(enumerate(convs), key=lambda kc: (-kc[1].s_max, kc[1].id)):
        root = disl.find(dc_node[c.dc_bus])
        if root not in seen:
            seen.add(root)
            dc_slack.append(k)
    if len(seen) != len({disl.find(k) for k in range(len(dc_node_bus))}):
        raise PowerFlowError("a DC island has no converter")

    return Grid(net, ac_node, dc_node, node_bus, dc_node_bus, vmin, vmax, refs, branches,
                np.array([ac_node[b.from_bus] for b in branches], int),
                np.array([ac_node[b.to_bus] for b in branches], int),
                gens, np.array([ac_node[g.bus] for g in gens], int), Pd, Qd, dvmin, dvmax, dcb,
                np.array([dc_node[b.from_bus] for b in dcb], int),
                np.array([dc_node[b.to_bus] for b in dcb], int),
                np.array([b.poles * b.y for b in dcb], float), convs,
                np.array([ac_node[c.ac_bus] for c in convs], int),
                np.array([dc_node[c.dc_bus] for c in convs], int), sorted(dc_slack))


# -- equations and derivatives ------------------------------------------------------

class _Physics:
    """Mismatch equations ``F(z) = 0`` over the full vector and their Jacobian.

    Rows: AC active balance (nb), AC reactive balance (nb), DC balance (nd).
    Columns follow ``Grid.cols()``.
    """

    def __init__(self, grid: Grid):
        self.g = grid
        self.c = grid.cols()
        self.Ybus, self.Yf, self.Yt, self.Cf, self.Ct = grid.admittances()
        nb, ng, nc = grid.nb, grid.ng, grid.nc
        self.Cg = sp.csr_matrix((np.ones(ng), (grid.gen_node, np.arange(ng))), shape=(nb, ng))
        self.Cc = sp.csr_matrix((np.ones(nc), (grid.conv_ac, np.arange(nc))), shape=(nb, nc))
        self.Ccd = sp.csr_matrix((np.ones(nc), (grid.conv_dc, np.arange(nc))), shape=(grid.nd, nc))
        self.la = np.array([c.loss_a for c in grid.convs])
        self.lb = np.array([c.loss_b for c in grid.convs])
        Yc = self.Ybus.tocoo()
        self.ybus_coo = (Yc.row, Yc.col, Yc.data)
        # per-branch end nodes and the 2x2 admittance entries
        nl = self.Yf.shape[0]
        self.bf = self.Cf.tocsr().indices.copy() if nl else np.zeros(0, int)
        self.bt = self.Ct.tocsr().indices.copy() if nl else np.zeros(0, int)
        r = np.arange(nl)
        Yf, Yt = self.Yf.tocsr(), self.Yt.tocsr()
        self.yff = np.asarray(Yf[r, self.bf]).ravel()
        self.yft = np.asarray(Yf[r, self.bt]).ravel()
        self.ytf = np.asarray(Yt[r, self.bf]).ravel()
        self.ytt = np.asarray(Yt[r, self.bt]).ravel()

    def split(self, z):
        c = self.c
        return (z[c["va"]], z[c["vm"]], z[c["u"]], z[c["pac"]], z[c["qac"]], z[c["pg"]], z[c["qg"]])

    def conv_loss(self, z):
        va, vm, u, pac, qac, pg, qg = self.split(z)
        s = np.sqrt(pac**2 + qac**2 + _EPS_S)
        v = vm[self.g.conv_ac]
        return self.la + self.lb * s / v, s, v

    def dc_flows(self, u):
        g = self.g
        uf, ut = u[g.dcf], u[g.dct]
        return g.dck * uf * (uf - ut), g.dck * ut * (ut - uf)

    def residual(self, z):
        g = self.g
        va, vm, u, pac, qac, pg, qg = self.split(z)
        V = vm * np.exp(1j * va)
        S = V * np.conj(self.Ybus @ V)
        Fp = S.real - self.Cg @ pg + g.Pd + self.Cc @ pac
        Fq = S.imag - self.Cg @ qg + g.Qd + self.Cc @ qac
        loss, _, _ = self.conv_loss(z)
        pf, pt = self.dc_flows(u)
        Fd = (np.bincount(g.dcf, pf, g.nd) + np.bincount(g.dct, pt, g.nd)
              + self.Ccd @ (loss - pac))
        return np.concatenate([Fp, Fq, Fd])

    def jacobian(self, z) -> sp.csr_matrix:
        g, c = self.g, self.c
        nb, nd, nc, ng = g.nb, g.nd, g.nc, g.ng
        va, vm, u, pac, qac, pg, qg = self.split(z)
        E = np.exp(1j * va)
        V = vm * E
        Ib = self.Ybus @ V
        yi, yj, y = self.ybus_coo
        diag = np.arange(nb)
        ii = np.concatenate([yi, diag])
        jj = np.concatenate([yj, diag])
        dS_dva = np.concatenate([-1j * V[yi] * np.conj(y * V[yj]), 1j * V * np.conj(Ib)])
        dS_dvm = np.concatenate([V[yi] * np.conj(y * E[yj]), np.conj(Ib) * E])
        loss, s, v = self.conv_loss(z)
        uf, ut = u[g.dcf], u[g.dct]
        kc = np.arange(nc)
        va0, vm0, u0 = c["va"].start, c["vm"].start, c["u"].start
        pac0, qac0 = c["pac"].start, c["qac"].start
        parts = [
            (ii, va0 + jj, dS_dva.real), (ii, vm0 + jj, dS_dvm.real),
            (nb + ii, va0 + jj, dS_dva.imag), (nb + ii, vm0 + jj, dS_dvm.imag),
            (g.gen_node, c["pg"].start + np.arange(ng), -np.ones(ng)),
            (nb + g.gen_node, c["qg"].start + np.arange(ng), -np.ones(ng)),
            (g.conv_ac, pac0 + kc, np.ones(nc)), (nb + g.conv_ac, qac0 + kc, np.ones(nc)),
            # DC balance: branch flows, then converter loss minus converter injection
            (2 * nb + g.dcf, u0 + g.dcf, g.dck * (2 * uf - ut)), (2 * nb + g.dcf, u0 + g.dct, -g.dck * uf),
            (2 * nb + g.dct, u0 + g.dct, g.dck * (2 * ut - uf)), (2 * nb + g.dct, u0 + g.dcf, -g.dck * ut),
            (2 * nb + g.conv_dc, pac0 + kc, self.lb * pac / (s * v) - 1.0),
            (2 * nb + g.conv_dc, qac0 + kc, self.lb * qac / (s * v)),
            (2 * nb + g.conv_dc, vm0 + g.conv_ac, -self.lb * s / v**2),
        ]
        rows = np.concatenate([np.asarray(p[0], int) for p in parts])
        cols = np.concatenate([np.asarray(p[1], int) for p in parts])
        vals = np.concatenate([np.asarray(p[2], float) for p in parts])
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nb + nd, c["n"]))

    def branch_flows(self, z):
        va, vm, *_ = self.split(z)
        V = vm * np.exp(1j * va)
        Sf = (self.Cf @ V) * np.conj(self.Yf @ V)
        St = (self.Ct @ V) * np.conj(self.Yt @ V)
        return Sf, St

    def branch_jacobian(self, z):
        """d[Pf; Qf; Pt; Qt]/dz (only angle and magnitude columns are nonzero)."""
        va, vm, *_ = self.split(z)
        E = np.exp(1j * va)
        V = vm * E
        nl, c = self.g.nl, self.c
        r = np.arange(nl)
        rows, cols, vals = [], [], []
        for k, (a, b, yaa, yab) in enumerate(((self.bf, self.bt, self.yff, self.yft),
                                              (self.bt, self.bf, self.ytt, self.ytf))):
            # S = Va conj(yaa Va + yab Vb)
            Va, Vb = V[a], V[b]
            I = yaa * Va + yab * Vb
            d = {("va", 0): 1j * Va * np.conj(I) - 1j * np.abs(Va) ** 2 * np.conj(yaa),
                 ("va", 1): -1j * Va * np.conj(yab * Vb),
                 ("vm", 0): E[a] * np.conj(I) + Va * np.conj(yaa * E[a]),
                 ("vm", 1): Va * np.conj(yab * E[b])}
            for (kind, end), dv in d.items():
                node = a if end == 0 else b
                for part, off in ((dv.real, 2 * k * nl), (dv.imag, (2 * k + 1) * nl)):
                    rows.append(r + off)
                    cols.append(node + c[kind].start)
                    vals.append(part)
        if not nl:
            return sp.csr_matrix((0, c["n"]))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(4 * nl, c["n"]))

    def dc_branch_jacobian(self, z):
        g, c = self.g, self.c
        u = z[c["u"]]
        nl = len(g.dcf)
        uf, ut = u[g.dcf], u[g.dct]
        r = np.arange(nl)
        rows = np.concatenate([r, r])
        cols = np.concatenate([g.dcf, g.dct]) + c["u"].start
        vals = np.concatenate([g.dck * (2 * uf - ut), -g.dck * uf])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nl, c["n"]))


# -- power flow -----------------------------------------------------------------------

@dataclass
class Setpoints:
    """Controls for one power-flow solve, keyed by element id.

    ``pg``/``qg`` per generator, ``vm`` voltage magnitude per AC bus (used at
    reference buses, and at every listed bus when ``pv`` is requested),
    ``pac``/``qac`` per converter, ``udc`` per DC bus (used at DC-slack buses).
    """

    pg: dict[int, float]
    qg: dict[int, float] = field(default_factory=dict)
    vm: dict[int, float] = field(default_factory=dict)
    va: dict[int, float] = field(default_factory=dict)
    pac: dict[int, float] = field(default_factory=dict)
    qac: dict[int, float] = field(default_factory=dict)
    udc: dict[int, float] = field(default_factory=dict)


@dataclass
class AcState:
    converged: bool
    iterations: int
    mismatch: float
    vm: dict[int, float]
    va: dict[int, float]
    udc: dict[int, float]
    pg: dict[int, float]
    qg: dict[int, float]
    pac: dict[int, float]
    qac: dict[int, float]
    pdc: dict[int, float]
    flows: dict[int, tuple[float, float, float, float]]  # branch id -> (pf, qf, pt, qt)
    dc_flows: dict[int, float]
    slack: dict[int, tuple[float, float]]  # reference bus id -> (P, Q) injection
    z: np.ndarray = field(repr=False, default=None)
    grid: Grid | None = field(repr=False, default=None)


def _initial_vector(grid: Grid, sp_: Setpoints) -> np.ndarray:
    c = grid.cols()
    z = np.zeros(c["n"])
    z[c["vm"]] = 1.0
    z[c["u"]] = 1.0
    for k, b in enumerate(grid.node_bus):
        if b in sp_.vm:
            z[c["vm"]][k] = sp_.vm[b]
        if b in sp_.va:
            z[c["va"]][k] = sp_.va[b]
    for k, b in enumerate(grid.dc_node_bus):
        if b in sp_.udc:
            z[c["u"].start + k] = sp_.udc[b]
    for k, cv in enumerate(grid.convs):
        z[c["pac"].start + k] = sp_.pac.get(cv.id, 0.0)
        z[c["qac"].start + k] = sp_.qac.get(cv.id, 0.0)
    for k, g in enumerate(grid.gens):
        z[c["pg"].start + k] = sp_.pg.get(g.id, 0.0)
        z[c["qg"].start + k] = sp_.qg.get(g.id, 0.0)
    # merged buses: use a setpoint given for any member
    for b, k in grid.ac_node.items():
        if b in sp_.vm and grid.node_bus[k] not in sp_.vm:
            z[c["vm"].start + k] = sp_.vm[b]
    for b, k in grid.dc_node.items():
        if b in sp_.udc and grid.dc_node_bus[k] not in sp_.udc:
            z[c["u"].start + k] = sp_.udc[b]
    return z


def _pf_masks(grid: Grid, pv_nodes=()):
    c = grid.cols()
    nb = grid.nb
    refs = set(grid.refs)
    pv = set(pv_nodes) - refs
    va_cols = [c["va"].start + k for k in range(nb) if k not in refs]
    vm_cols = [c["vm"].start + k for k in range(nb) if k not in refs and k not in pv]
    slack_dc = {grid.conv_dc[k] for k in grid.dc_slack}
    u_cols = [c["u"].start + k for k in range(grid.nd) if k not in slack_dc]
    pac_cols = [c["pac"].start + k for k in grid.dc_slack]
    state = np.array(va_cols + vm_cols + u_cols + pac_cols, int)
    rows = ([k for k in range(nb) if k not in refs]
            + [nb + k for k in range(nb) if k not in refs and k not in pv]
            + [2 * nb + k for k in range(grid.nd)])
    return state, np.array(rows, int)


def _assign_residual(grid: Grid, z: np.ndarray, F: np.ndarray, nodes, kind: str) -> None:
    """Let the generators at ``nodes`` absorb the active/reactive balance residual there."""
    c = grid.cols()
    col = c["pg"] if kind == "p" else c["qg"]
    roff = 0 if kind == "p" else grid.nb
    for k in nodes:
        r = F[roff + k]
        if r == 0:
            continue
        gk = [j for j, g in enumerate(grid.gens) if grid.gen_node[j] == k and not g.is_null]
        if not gk:
            gk = [j for j in range(grid.ng) if grid.gen_node[j] == k]
        if not gk:
            raise PowerFlowError(f"no generator at slack node {grid.node_bus[k]}")
        # a positive residual means too little injection; spread it by capability
        cap = []
        for j in gk:
            g = grid.gens[j]
            lo, hi = (g.p_min, g.p_max) if kind == "p" else (g.q_min, g.q_max)
            cur = z[col.start + j]
            room = (hi - cur) if r > 0 else (cur - lo)
            cap.append(max(room, 0.0))
        tot = sum(cap)
        share = [cp / tot for cp in cap] if tot > 0 else [1.0 / len(gk)] * len(gk)
        for j, s in zip(gk, share):
            z[col.start + j] += r * s


BACKTRACK_STEPS = 8


def _generator_nodes(grid: Grid) -> list[int]:
    return sorted({grid.gen_node[j] for j, g in enumerate(grid.gens)
                   if not g.is_null and g.q_max > g.q_min})


def _newton(grid: Grid, phys: _Physics, z: np.ndarray, max_iter: int = 50, pv_nodes=()):
    state, rows = _pf_masks(grid, pv_nodes)
    it = 0
    F = phys.residual(z)
    err = float(np.abs(F[rows]).max(initial=0.0))
    while err > MISMATCH_TOL and it < max_iter:
        J = phys.jacobian(z)[rows][:, state]
        try:
            with np.errstate(all="raise"):
                dx = spla.spsolve(J.tocsc(), -F[rows])
        except (RuntimeError, FloatingPointError, ValueError):
            return z, False, it, err, F
        if not np.all(np.isfinite(dx)):
            return z, False, it, err, F
        # backtrack on the mismatch norm when the full step overshoots
        norm = np.linalg.norm(F[rows])
        step = 1.0
        for _ in range(BACKTRACK_STEPS):
            zt = z.copy()
            zt[state] += step * dx
            Ft = phys.residual(zt)
            if np.linalg.norm(Ft[rows]) < norm or step * np.abs(dx).max() < MISMATCH_TOL:
                break
            step *= 0.5
        z, F = zt, Ft
        it += 1
        err = float(np.abs(F[rows]).max(initial=0.0))
    converged = err <= MISMATCH_TOL
    z = z.copy()
    refs = list(grid.refs)
    _assign_residual(grid, z, F, refs, "p")
    _assign_residual(grid, z, F, refs + [k for k in pv_nodes if k not in refs], "q")
    F = phys.residual(z)
    return z, converged, it, float(np.abs(F).max(initial=0.0)), F


def _state(grid: Grid, phys: _Physics, z, converged, it, mism) -> AcState:
    va, vm, u, pac, qac, pg, qg = phys.split(z)
    Sf, St = phys.branch_flows(z)
    loss, _, _ = phys.conv_loss(z)
    pf_dc, _ = phys.dc_flows(u)
    ref_inj = {}
    for k in grid.refs:
        S = (vm[k] * np.exp(1j * va[k])) * np.conj((phys.Ybus @ (vm * np.exp(1j * va)))[k])
        ref_inj[grid.node_bus[k]] = (float(S.real + grid.Pd[k] + (phys.Cc @ pac)[k]),
                                     float(S.imag + grid.Qd[k] + (phys.Cc @ qac)[k]))
    return AcState(
        converged, it, mism,
        {b: float(vm[k]) for b, k in grid.ac_node.items()},
        {b: float(va[k]) for b, k in grid.ac_node.items()},
        {b: float(u[k]) for b, k in grid.dc_node.items()},
        {g.id: float(pg[j]) for j, g in enumerate(grid.gens)},
        {g.id: float(qg[j]) for j, g in enumerate(grid.gens)},
        {cv.id: float(pac[k]) for k, cv in enumerate(grid.convs)},
        {cv.id: float(qac[k]) for k, cv in enumerate(grid.convs)},
        {cv.id: float(loss[k] - pac[k]) for k, cv in enumerate(grid.convs)},
        {br.id: (float(Sf[l].real), float(Sf[l].imag), float(St[l].real), float(St[l].imag))
         for l, br in enumerate(grid.branches)},
        {br.id: float(pf_dc[l]) for l, br in enumerate(grid.dc_branches)},
        ref_inj, z, grid)


def newton_pf(net: Network, plan: TopologyPlan | dict | None, dispatch: Setpoints, t: int = 0,
              pv: bool = False, max_iter: int = 50) -> AcState:
    """Solve the AC/DC power flow for fixed setpoints.

    Reference buses hold their voltage magnitude (``dispatch.vm``, default
    1.0) and angle 0; their generators absorb the active and reactive
    balance.  With ``pv=True`` every bus listed in ``dispatch.vm`` that has
    a generator keeps its magnitude and its generators absorb the reactive
    balance.  Non-convergence is reported through ``AcState.converged``.
    """
    grid = reduce_grid(net, plan, t)
    phys = _Physics(grid)
    z = _initial_vector(grid, dispatch)
    pv_nodes = []
    if pv:
        gen_nodes = set(grid.gen_node.tolist())
        pv_nodes = sorted({grid.ac_node[b] for b in dispatch.vm if b in grid.ac_node} & gen_nodes)
    z, conv, it, mism, _ = _newton(grid, phys, z, max_iter, pv_nodes)
    return _state(grid, phys, z, conv, it, mism)


# -- successive linear programming ---------------------------------------------------------

@dataclass
class Violation:
    element: str
    quantity: str
    amount: float


@dataclass
class FeasibilityReport:
    """Outcome of validating one dispatch with exact physics.

    ``converged`` refers to the power flow at the returned point (mismatch
    at most ``MISMATCH_TOL``).  ``optimal`` is False when the successive
    linearization hit its iteration cap before its stopping test; the point
    is still a validated power flow, only possibly not cost-minimal.
    """
    converged: bool
    mismatch: float
    violations: list[Violation]
    generation_cost: float
    iterations: int
    lpac_objective: float = float("nan")
    lpac_bound: float = 0.0
    state: AcState | None = field(repr=False, default=None)
    optimal: bool = True

    @property
    def feasible(self) -> bool:
        return self.converged and not self.violations


VIOLATION_PENALTY = 1e6
MOVE_COST = 1e-3
Q_MOVE_COST = 1e-1
SHORTFALL_PENALTY = 1e4


def _violations(grid: Grid, phys: _Physics, z: np.ndarray, cf: float, tol: float = LIMIT_TOL):
    va, vm, u, pac, qac, pg, qg = phys.split(z)
    out = []

    def chk(elem, qty, val, lo, hi):
        if val > hi + tol:
            out.append(Violation(elem, qty, float(val - hi)))
        elif val < lo - tol:
            out.append(Violation(elem, qty, float(lo - val)))

    for k, b in enumerate(grid.node_bus):
        chk(f"bus {b}", "vm", vm[k], grid.vmin[k], grid.vmax[k])
    for k, b in enumerate(grid.dc_node_bus):
        chk(f"dcbus {b}", "u", u[k], grid.dc_vmin[k], grid.dc_vmax[k])
    for j, g in enumerate(grid.gens):
        hi = g.p_max * cf if g.is_wind else g.p_max
        chk(f"gen {g.id}", "p", pg[j], min(g.p_min, hi), hi)
        chk(f"gen {g.id}", "q", qg[j], g.q_min, g.q_max)
    Sf, St = phys.branch_flows(z)
    for l, br in enumerate(grid.branches):
        for side, S in (("from", Sf[l]), ("to", St[l])):
            chk(f"branch {br.id}", f"p_{side}", S.real, -br.p_max, br.p_max)
            chk(f"branch {br.id}", f"q_{side}", S.imag, -br.q_max, br.q_max)
    pf, _ = phys.dc_flows(u)
    for l, br in enumerate(grid.dc_branches):
        chk(f"dcbranch {br.id}", "p", pf[l], br.p_min, br.p_max)
    r = math.cos(math.pi / CONVERTER_FACETS)
    for k, cv in enumerate(grid.convs):
        chk(f"conv {cv.id}", "p", pac[k], -cv.s_max, cv.s_max)
        chk(f"conv {cv.id}", "q", qac[k], -cv.s_max, cv.s_max)
        for n in range(CONVERTER_FACETS):
            a = (2 * n + 1) * math.pi / CONVERTER_FACETS
            chk(f"conv {cv.id}", f"facet{n}", pac[k] * math.cos(a) + qac[k] * math.sin(a),
                -np.inf, cv.s_max * r)
    return out


def _total_violation(v: list[Violation]) -> float:
    return float(sum(x.amount for x in v))


def generation_cost(net: Network, pg: dict[int, float]) -> float:
    return float(sum(g.cost(pg.get(g.id, 0.0)) for g in net.generators))


class _Slp:
    """Trust-region successive LP over the exact AC/DC equations."""

    def __init__(self, grid: Grid, cf: float, backend: str | None):
        self.g = grid
        self.phys = _Physics(grid)
        self.cf = cf
        self.backend = backend
        self.c = grid.cols()
        c = self.c
        self.move_cost = np.full(c["n"], MOVE_COST)
        self.move_cost[c["qac"]] = Q_MOVE_COST
        self.move_cost[c["qg"]] = Q_MOVE_COST
        self.move_cost[c["vm"]] = Q_MOVE_COST
        # convergence is judged on the active-power dispatch
        self.dispatch_cols = np.r_[np.arange(c["pac"].start, c["pac"].stop),
                                   np.arange(c["pg"].start, c["pg"].stop)]

    def pg_bounds(self, j):
        g = self.g.gens[j]
        hi = g.p_max * self.cf if g.is_wind else g.p_max
        return min(g.p_min, hi), hi

    def controls(self) -> np.ndarray:
        g, c = self.g, self.c
        ctrl = list(range(c["pac"].start, c["n"]))
        ctrl += [c["vm"].start + k for k in g.refs]
        ctrl += [c["u"].start + g.conv_dc[k] for k in g.dc_slack]
        return np.array(sorted(set(ctrl)), int)

    def curvature(self, z, dz):
        """Linearization error of the nonlinear rows at ``z + dz``.

        Returned as the offsets that a second-order correction adds to the
        balance, AC branch and DC branch rows of the LP built at ``z``.
        """
        phys, g = self.phys, self.g
        zt = z + dz
        J = phys.jacobian(z)
        out = {"bal": phys.residual(zt) - phys.residual(z) - J @ dz}
        if g.nl:
            def flows(x):
                Sf, St = phys.branch_flows(x)
                return np.concatenate([Sf.real, Sf.imag, St.real, St.imag])
            out["br"] = flows(zt) - flows(z) - phys.branch_jacobian(z) @ dz
        if g.dc_branches:
            pf = lambda x: phys.dc_flows(phys.split(x)[2])[0]  # noqa: E731
            out["dc"] = pf(zt) - pf(z) - phys.dc_branch_jacobian(z) @ dz
        return out

    def step(self, z, radius, objective, shift=None):
        """Solve the LP linearized at ``z``; returns (step, model value) or (None, nan).

        ``radius`` is the trust-region half-width of every control column
        (NaN for state columns).  Control moves carry a tiny cost so that
        controls the objective is indifferent to stay where they are.
        ``shift`` holds second-order corrections from :meth:`curvature`.
        """
        shift = shift or {}
        g, c, phys = self.g, self.c, self.phys
        n = c["n"]
        mb = MipBuilder("slp")
        d = [None] * n
        for j in range(n):
            if not np.isnan(radius[j]):
                lo, hi = -radius[j], radius[j]
            elif c["va"].start <= j < c["va"].stop:
                lo, hi = -0.3, 0.3
            else:
                lo, hi = -0.1, 0.1
            d[j] = mb.var(f"d{j}", lo, hi)
        for k in g.refs:
            mb.set_bounds(d[c["va"].start + k], 0.0, 0.0)

        def clip_box(col, lo, hi):
            cur = z[col]
            a = max(lo - cur, -radius[col])
            b = min(hi - cur, radius[col])
            if a > b:
                a = b = min(max(0.0, lo - cur), hi - cur)
            mb.set_bounds(d[col], a, b)

        for j in range(g.ng):
            gen = g.gens[j]
            lo, hi = self.pg_bounds(j)
            clip_box(c["pg"].start + j, lo, hi)
            clip_box(c["qg"].start + j, gen.q_min, gen.q_max)
        for k, cv in enumerate(g.convs):
            clip_box(c["pac"].start + k, -cv.s_max, cv.s_max)
            clip_box(c["qac"].start + k, -cv.s_max, cv.s_max)
        for j in np.flatnonzero(~np.isnan(radius)):
            a = mb.var(f"m{j}", 0.0, np.inf)
            mb.cost(a, self.move_cost[j])
            mb.row(f"mu{j}", [a, d[j]], [1.0, -1.0], GE, 0.0)
            mb.row(f"ml{j}", [a, d[j]], [1.0, 1.0], GE, 0.0)

        F = phys.residual(z) + shift.get("bal", 0.0)
        J = phys.jacobian(z).tocsr()
        for r in range(J.shape[0]):
            sl = slice(J.indptr[r], J.indptr[r + 1])
            mb.row(f"bal{r}", [d[j] for j in J.indices[sl]], J.data[sl], EQ, -F[r])

        def elastic(name, cols, vals, val, lo, hi):
            e = mb.var(f"e_{name}", 0.0, np.inf)
            mb.cost(e, VIOLATION_PENALTY)
            if hi < np.inf:
                mb.row(f"{name}_u", list(cols) + [e], list(vals) + [-1.0], LE, hi - val)
            if lo > -np.inf:
                mb.row(f"{name}_l", list(cols) + [e], list(vals) + [1.0], GE, lo - val)

        va, vm, u, pac, qac, pg, qg = phys.split(z)
        for k in range(g.nb):
            elastic(f"v{k}", [d[c["vm"].start + k]], [1.0], vm[k], g.vmin[k], g.vmax[k])
        for k in range(g.nd):
            elastic(f"u{k}", [d[c["u"].start + k]], [1.0], u[k], g.dc_vmin[k], g.dc_vmax[k])
        if g.nl:
            Sf, St = phys.branch_flows(z)
            JB = phys.branch_jacobian(z)
            vals = np.concatenate([Sf.real, Sf.imag, St.real, St.imag]) + shift.get("br", 0.0)
            lims = np.concatenate([[b.p_max for b in g.branches], [b.q_max for b in g.branches]] * 2)
            for r in range(JB.shape[0]):
                if not np.isfinite(lims[r]):
                    continue
                sl = slice(JB.indptr[r], JB.indptr[r + 1])
                elastic(f"br{r}", [d[j] for j in JB.indices[sl]], JB.data[sl], vals[r], -lims[r], lims[r])
        if g.dc_branches:
            pf = phys.dc_flows(u)[0] + shift.get("dc", 0.0)
            JD = phys.dc_branch_jacobian(z)
            for r, br in enumerate(g.dc_branches):
                sl = slice(JD.indptr[r], JD.indptr[r + 1])
                elastic(f"dc{r}", [d[j] for j in JD.indices[sl]], JD.data[sl], pf[r], br.p_min, br.p_max)
        rr = math.cos(math.pi / CONVERTER_FACETS)
        for k, cv in enumerate(g.convs):
            for m in range(CONVERTER_FACETS):
                a = (2 * m + 1) * math.pi / CONVERTER_FACETS
                ca, sa = math.cos(a), math.sin(a)
                elastic(f"cv{k}_{m}", [d[c["pac"].start + k], d[c["qac"].start + k]], [ca, sa],
                        pac[k] * ca + qac[k] * sa, -np.inf, cv.s_max * rr)

        objective(mb, d, z)
        sol = solve(mb.build(), self.backend, 0.0)
        if sol.x is None:
            return None, np.nan
        return sol.x[:n], sol.objective

    def run(self, z, objective, merit, max_iter=20, delta=0.2, tol=1e-6):
        """Trust-region loop; returns (z, converged, iterations, mismatch).

        The LP model value at a zero step equals ``merit(z)``, so the LP
        optimum predicts the merit reduction of its step.  A step is
        accepted when the exact power flow realizes at least a tenth of the
        predicted reduction, if necessary after a second-order correction.
        The radius grows after very good steps that reach its boundary and
        shrinks after poor ones.  The loop stops when the
        dispatch step falls below ``tol`` or the model predicts no further
        improvement.
        """
        g, phys = self.g, self.phys
        z0 = z
        z, ok, _, mism, _ = _newton(g, phys, z)
        if not ok:
            # let generator buses hold their voltage and take whatever reactive power that needs
            z, ok, _, mism, _ = _newton(g, phys, z0, pv_nodes=_generator_nodes(g))
            if ok:
                z, ok, _, mism, _ = _newton(g, phys, z)
        if not ok:
            raise PowerFlowError("power flow at the starting point did not converge")
        ctrl = self.controls()
        radius = np.full(self.c["n"], np.nan)
        radius[ctrl] = delta
        cur = merit(z)
        it = 0
        converged = False
        while it < max_iter:
            it += 1
            dz, model = self.step(z, radius, objective)
            if dz is None:
                break
            pred = cur - model
            settled = (np.abs(dz[self.dispatch_cols]).max(initial=0.0) < tol
                       and not _violations(g, phys, z, self.cf))
            if settled or pred <= 1e-8 * max(1.0, abs(cur)):
                converged = True
                break
            tz, ok, _, tm, _ = _newton(g, phys, z + dz)
            m = merit(tz) if ok else np.inf
            ratio = (cur - m) / pred
            if ratio <= 0.1:
                # second-order correction: same model, constraints shifted by
                # the curvature observed at the trial point
                dz2, _ = self.step(z, radius, objective, self.curvature(z, dz))
                if dz2 is not None:
                    tz2, ok2, _, tm2, _ = _newton(g, phys, z + dz2)
                    m2 = merit(tz2) if ok2 else np.inf
                    if (cur - m2) / pred > 0.1:
                        dz, tz, tm, m = dz2, tz2, tm2, m2
                        ratio = (cur - m) / pred
            du = np.abs(dz[ctrl])
            if ratio > 0.1:
                z, mism, cur = tz, tm, m
                if ratio > 0.9 and (du >= 0.99 * radius[ctrl]).any():
                    radius[ctrl] = np.minimum(1.5 * radius[ctrl], 1.0)
            if ratio < 0.25:
                radius[ctrl] = 0.5 * np.minimum(radius[ctrl], du.max())
                if np.nanmax(radius) < tol:
                    break
        return z, converged, it, mism


def _pwl_objective(weights_of, segments: int = 20):
    """Fine tangent-line cost model centred on the current point of each generator."""

    def objective(mb, d, z, slp: _Slp):
        g, c = slp.g, slp.c
        for j, gen in enumerate(g.gens):
            col = c["pg"].start + j
            cur = z[col]
            w = weights_of(j, gen)
            if w == 0 and gen.c2 == 0:
                continue
            mb.c0 += w * gen.c0
            if gen.c2 == 0:
                mb.cost(d[col], w * gen.c1)
                mb.c0 += w * gen.c1 * cur
                continue
            y = mb.var(f"y{j}", -np.inf, np.inf)
            mb.cost(y, w)
            lo, hi = mb.bounds(d[col])
            pts = cur + np.union1d(np.linspace(lo, hi, segments + 1), [0.0])
            for n, p in enumerate(pts):
                # y >= c2 p^2 + c1 p + 2 c2 p (P - p), expressed in the deviation d = P - cur;
                # the tangent at the current point makes the model exact there
                slope = gen.c1 + 2 * gen.c2 * p
                a = gen.c2 * p * p + gen.c1 * p + slope * (cur - p)
                mb.row(f"pwl{j}_{n}", [y, d[col]], [1.0, -slope], GE, a)
    return objective


def _lpac_start(net: Network, plan_t: TopologyPlan, cf: float, backend: str | None,
                cfg: ModelConfig | None = None):
    cfg = cfg or ModelConfig()
    scen = ScenarioSet.deterministic([cf])
    m, layout = build(net, scen, ModelConfig(mode="opf", cosine_cuts=cfg.cosine_cuts,
                                             cost_segments=cfg.cost_segments), fixed=plan_t)
    sol = solve(m.relaxed(), backend, 0.0)
    if sol.x is None:
        return None, np.nan, layout.linearization_bound
    x = sol.x
    get = lambda kind, i: float(x[layout.index[(kind, i, 0, 0)]])  # noqa: E731
    sp_ = Setpoints(
        pg={g.id: get("pg", g.id) for g in net.generators},
        qg={g.id: get("qg", g.id) for g in net.generators},
        vm={b.id: 1.0 + get("ph", b.id) for b in net.ac_buses},
        va={b.id: get("th", b.id) for b in net.ac_buses},
        pac={c.id: get("pac", c.id) for c in net.converters},
        qac={c.id: get("qac", c.id) for c in net.converters},
        udc={b.id: 1.0 + get("phdc", b.id) for b in net.dc_buses},
    )
    return sp_, sol.objective, layout.linearization_bound


def _plan_at(net: Network, plan) -> TopologyPlan:
    if plan is None:
        return TopologyPlan.original(net, 1)
    if isinstance(plan, TopologyPlan):
        return plan if plan.horizon == 1 else plan.slice(0)
    ids = tuple(s.id for s in net.switches)
    return TopologyPlan(ids, np.array([[bool(plan[s]) for s in ids]]))


def feasibility_opf(net: Network, plan=None, cf: float = 1.0, backend: str | None = None,
                    start: Setpoints | None = None, max_iter: int = 20,
                    cfg: ModelConfig | None = None) -> tuple[Setpoints, FeasibilityReport]:
    """Cost-minimal dispatch that satisfies the exact AC/DC equations under a fixed topology.

    ``plan`` is a single-timestep TopologyPlan or a switch-status mapping.
    The search starts from the LPAC optimum of the same topology, whose
    objective and linearization bound are reported for the fidelity check.
    """
    plan_t = _plan_at(net, plan)
    grid = reduce_grid(net, plan_t, 0)
    lp_sp, lp_obj, lp_bound = _lpac_start(net, plan_t, cf, backend, cfg)
    if start is None:
        start = lp_sp
    if start is None:
        raise PowerFlowError("the linearized model is infeasible for this topology")
    slp = _Slp(grid, cf, backend)
    z0 = _initial_vector(grid, start)
    obj = _pwl_objective(lambda j, g: 1.0)

    def merit(z):
        pg = z[slp.c["pg"]]
        cost = sum(g.cost(pg[j]) for j, g in enumerate(grid.gens))
        return cost + VIOLATION_PENALTY * _total_violation(_violations(grid, slp.phys, z, cf, 0.0))

    z, converged, it, mism = slp.run(z0, lambda mb, d, z: obj(mb, d, z, slp), merit, max_iter)
    st = _state(grid, slp.phys, z, mism <= MISMATCH_TOL, it, mism)
    viol = _violations(grid, slp.phys, z, cf)
    sp_out = _setpoints_from(grid, st)
    rep = FeasibilityReport(mism <= MISMATCH_TOL, mism, viol, generation_cost(net, st.pg), it,
                            lp_obj, lp_bound, st, optimal=converged)
    return sp_out, rep


def _setpoints_from(grid: Grid, st: AcState) -> Setpoints:
    vm = {grid.node_bus[k]: st.vm[grid.node_bus[k]] for k in range(grid.nb)}
    va = {grid.node_bus[k]: st.va[grid.node_bus[k]] for k in range(grid.nb)}
    return Setpoints(dict(st.pg), dict(st.qg), vm, va, dict(st.pac), dict(st.qac), dict(st.udc))


# -- redispatch ---------------------------------------------------------------------------------

@dataclass
class DispatchResult:
    pg: dict[int, float]
    delta: dict[int, float]
    redispatch_cost: float
    generation_cost: float
    wind_shortfall: float
    report: FeasibilityReport


def redispatch(net: Network, plan, d1: Setpoints, measured_cf: float, forecast_cf: float,
               backend: str | None = None, max_iter: int = 20) -> DispatchResult:
    """Adjust the D-1 dispatch to the measured wind at marginal cost.

    Every unit's deviation is priced at its marginal cost at the D-1
    setpoint.  Wind is scheduled at its D-1 value plus any extra measured
    availability, capped by the measured availability; falling short of
    that target is penalized but not counted as redispatch cost.
    """
    plan_t = _plan_at(net, plan)
    grid = reduce_grid(net, plan_t, 0)
    if measured_cf == forecast_cf:
        st = newton_pf(net, plan_t, d1)
        viol = _violations(grid, _Physics(grid), st.z, measured_cf)
        rep = FeasibilityReport(st.converged, st.mismatch, viol, generation_cost(net, st.pg), 0, state=st)
        return DispatchResult(dict(st.pg), {g: 0.0 for g in st.pg}, 0.0, rep.generation_cost, 0.0, rep)

    slp = _Slp(grid, measured_cf, backend)
    c = slp.c
    z0 = _initial_vector(grid, d1)
    p1 = np.array([d1.pg.get(g.id, 0.0) for g in grid.gens])
    mc = np.array([g.marginal_cost(p) for g, p in zip(grid.gens, p1)])
    target = np.full(grid.ng, -np.inf)
    for j, g in enumerate(grid.gens):
        if g.is_wind:
            avail_m, avail_f = g.p_max * measured_cf, g.p_max * forecast_cf
            target[j] = min(avail_m, p1[j] + max(0.0, avail_m - avail_f))

    def objective(mb, d, z):
        pg = z[c["pg"]]
        for j in range(grid.ng):
            col = d[c["pg"].start + j]
            up = mb.var(f"up{j}", 0.0, np.inf)
            dn = mb.var(f"dn{j}", 0.0, np.inf)
            mb.cost(up, mc[j])
            mb.cost(dn, mc[j])
            mb.row(f"dev{j}", [col, up, dn], [1.0, -1.0, 1.0], EQ, p1[j] - pg[j])
            if np.isfinite(target[j]):
                sh = mb.var(f"sh{j}", 0.0, np.inf)
                mb.cost(sh, SHORTFALL_PENALTY)
                mb.row(f"tgt{j}", [col, sh], [1.0, 1.0], GE, target[j] - pg[j])

    def merit(z):
        pg = z[c["pg"]]
        cost = float(mc @ np.abs(pg - p1))
        short = float(np.maximum(target - pg, 0.0)[np.isfinite(target)].sum())
        return cost + SHORTFALL_PENALTY * short + VIOLATION_PENALTY * _total_violation(
            _violations(grid, slp.phys, z, measured_cf, 0.0))

    z, converged, it, mism = slp.run(z0, objective, merit, max_iter)
    st = _state(grid, slp.phys, z, mism <= MISMATCH_TOL, it, mism)
    viol = _violations(grid, slp.phys, z, measured_cf)
    pg = z[c["pg"]]
    delta = {g.id: float(pg[j] - p1[j]) for j, g in enumerate(grid.gens)}
    cost = float(mc @ np.abs(pg - p1))
    short = float(np.maximum(target - pg, 0.0)[np.isfinite(target)].sum())
    rep = FeasibilityReport(mism <= MISMATCH_TOL, mism, viol, generation_cost(net, st.pg), it,
                            state=st, optimal=converged)
    return DispatchResult(dict(st.pg), delta, cost, rep.generation_cost, short, rep)
