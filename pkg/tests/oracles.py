"""Independent reference models used as test oracles."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from gridtopo.network import Network


def reference_lpac_opf(net: Network, cf: float, cuts: int, segments: int) -> float:
    """Plain LPAC-OPF written out row by row and solved with ``scipy.optimize.linprog``."""
    buses = [b.id for b in net.ac_buses]
    nb, ng, nl = len(buses), len(net.generators), len(net.ac_branches)
    pos = {b: k for k, b in enumerate(buses)}
    # columns: theta, phi, pg, qg, cost epigraph, cs
    th, ph = np.arange(nb), nb + np.arange(nb)
    pg, qg = 2 * nb + np.arange(ng), 2 * nb + ng + np.arange(ng)
    y, cs = 2 * nb + 2 * ng + np.arange(ng), 2 * nb + 3 * ng + np.arange(nl)
    n = 2 * nb + 3 * ng + nl
    lo, hi, c = np.zeros(n), np.zeros(n), np.zeros(n)
    for k, b in enumerate(net.ac_buses):
        lo[th[k]], hi[th[k]] = (0.0, 0.0) if b.is_reference else (b.amin, b.amax)
        lo[ph[k]], hi[ph[k]] = b.vmin - 1, b.vmax - 1
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for k, g in enumerate(net.generators):
        pmax = g.p_max * cf if g.is_wind else g.p_max
        lo[pg[k]], hi[pg[k]] = min(g.p_min, pmax), pmax
        lo[qg[k]], hi[qg[k]] = g.q_min, g.q_max
        lo[y[k]], hi[y[k]] = -np.inf, np.inf
        c[y[k]] = 1.0
        if g.c2 == 0:
            row = np.zeros(n)
            row[y[k]], row[pg[k]] = 1.0, -g.c1
            A_eq.append(row)
            b_eq.append(g.c0)
            continue
        for p in np.linspace(g.p_min, g.p_max, segments + 1):
            # y >= cost(p) + cost'(p) (P - p)
            row = np.zeros(n)
            row[y[k]], row[pg[k]] = -1.0, g.c1 + 2 * g.c2 * p
            A_ub.append(row)
            b_ub.append(g.c2 * p * p - g.c0)
    pbal = np.zeros((nb, n))
    qbal = np.zeros((nb, n))
    pd = np.zeros(nb)
    qd = np.zeros(nb)
    for k, g in enumerate(net.generators):
        pbal[pos[g.bus], pg[k]] += 1
        qbal[pos[g.bus], qg[k]] += 1
    for ld in net.loads:
        pd[pos[ld.bus]] += ld.p
        qd[pos[ld.bus]] += ld.q
    for l, br in enumerate(net.ac_branches):
        i, j = pos[br.from_bus], pos[br.to_bus]
        z2 = br.r**2 + br.x**2
        g_, b_ = br.r / z2, -br.x / z2
        bs = br.b_charging / 2
        lo[cs[l]], hi[cs[l]] = math.cos(br.dtheta_max), 1.0
        for a, b, s in ((i, j, 1.0), (j, i, -1.0)):
            # p_ab = g (1 + 2 phi_a) - g (cs + phi_a + phi_b) - b (th_a - th_b)
            prow = np.zeros(n)
            prow[ph[a]] += g_
            prow[ph[b]] -= g_
            prow[cs[l]] -= g_
            prow[th[a]] -= b_
            prow[th[b]] += b_
            # q_ab = -(b + bs)(1 + 2 phi_a) + b (cs + phi_a + phi_b) - g (th_a - th_b)
            qrow = np.zeros(n)
            qrow[ph[a]] += -2 * (b_ + bs) + b_
            qrow[ph[b]] += b_
            qrow[cs[l]] += b_
            qrow[th[a]] -= g_
            qrow[th[b]] += g_
            pbal[a] -= prow
            pd[a] += g_
            qbal[a] -= qrow
            qd[a] -= (b_ + bs)
            for row, const, lim in ((prow, g_, br.p_max), (qrow, -(b_ + bs), br.q_max)):
                if math.isfinite(lim):
                    A_ub += [row, -row]
                    b_ub += [lim - const, lim + const]
        kappa = (1 - math.cos(br.dtheta_max)) / br.dtheta_max**2
        for d in np.linspace(-br.dtheta_max, br.dtheta_max, cuts):
            row = np.zeros(n)
            row[cs[l]] = 1.0
            row[th[i]], row[th[j]] = 2 * kappa * d, -2 * kappa * d
            A_ub.append(row)
            b_ub.append(1 + kappa * d * d)
        row = np.zeros(n)
        row[th[i]], row[th[j]] = 1.0, -1.0
        A_ub += [row, -row]
        b_ub += [br.dtheta_max, br.dtheta_max]
    A_eq += list(pbal) + list(qbal)
    b_eq += list(pd) + list(qd)
    res = linprog(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=np.array(A_eq),
                  b_eq=np.array(b_eq), bounds=list(zip(lo, hi)), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
