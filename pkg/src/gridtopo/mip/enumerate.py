"""Exhaustive enumeration of binary assignments, used as a ground-truth oracle.

Assignments are generated depth first.  Each partial assignment is checked
against row-activity intervals (every row's attainable range given the
current variable bounds); branches that cannot satisfy some row are cut.
Each surviving complete assignment is evaluated by one LP with the binaries
fixed.
"""
from __future__ import annotations

import time

import numpy as np

from .backends import get_backend
from .model import MipError, MipInstance, MipSolution

MAX_BINARIES = 24
_TOL = 1e-9


def _contrib(a, lo, hi):
    return np.where(a > 0, a * lo, a * hi), np.where(a > 0, a * hi, a * lo)


def enumerate_binaries(m: MipInstance, lp_backend: str | None = "highs") -> MipSolution:
    bins = np.flatnonzero(m.binary)
    if len(bins) > MAX_BINARIES:
        raise MipError(f"{len(bins)} binaries exceed the enumeration limit of {MAX_BINARIES}")
    t0 = time.perf_counter()
    backend = get_backend(lp_backend)
    session = backend.lp_session(m)

    A = m.A.tocsc()
    row_lo, row_hi = m.row_bounds()
    lb, ub = m.lb.copy(), m.ub.copy()
    rmin = np.zeros(m.n_rows)
    rmax = np.zeros(m.n_rows)
    with np.errstate(invalid="ignore"):
        for j in range(m.n_vars):
            sl = slice(A.indptr[j], A.indptr[j + 1])
            lo_c, hi_c = _contrib(A.data[sl], lb[j], ub[j])
            np.add.at(rmin, A.indices[sl], np.nan_to_num(lo_c, nan=-np.inf))
            np.add.at(rmax, A.indices[sl], np.nan_to_num(hi_c, nan=np.inf))

    best = MipSolution("infeasible", n_enumerated=0)
    count = 0

    def feasible_rows(rows):
        return not ((rmin[rows] > row_hi[rows] + _TOL).any()
                    or (rmax[rows] < row_lo[rows] - _TOL).any())

    def visit(depth):
        nonlocal best, count
        if depth == len(bins):
            count += 1
            sol = session.solve(lb, ub)
            if sol.has_solution and sol.status == "optimal" and (
                    best.x is None or sol.objective < best.objective - 1e-12):
                best = sol
            return
        j = bins[depth]
        sl = slice(A.indptr[j], A.indptr[j + 1])
        rows, a = A.indices[sl], A.data[sl]
        old_lo, old_hi = _contrib(a, lb[j], ub[j])
        for v in (0.0, 1.0):
            if not lb[j] <= v <= ub[j]:
                continue
            new_lo, new_hi = _contrib(a, v, v)
            rmin[rows] += new_lo - old_lo
            rmax[rows] += new_hi - old_hi
            saved = lb[j], ub[j]
            lb[j] = ub[j] = v
            if feasible_rows(rows):
                visit(depth + 1)
            lb[j], ub[j] = saved
            rmin[rows] -= new_lo - old_lo
            rmax[rows] -= new_hi - old_hi

    if len(bins) == 0 or (rmin <= row_hi + _TOL).all() and (rmax >= row_lo - _TOL).all():
        visit(0)
    wall = time.perf_counter() - t0
    if best.x is None:
        return MipSolution("infeasible", wall_time=wall, n_enumerated=count)
    return MipSolution("optimal", best.objective, best.x, 0.0, wall, best.objective, count)
