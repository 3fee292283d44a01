"""Solve backends.  Each backend maps a MipInstance to a MipSolution."""
from __future__ import annotations

import time
from typing import Callable, Protocol

import numpy as np

from .model import EQ, GE, LE, MipError, MipInstance, MipSolution


class ConfigurationError(RuntimeError):
    """No usable backend is registered under the requested name."""


class Backend(Protocol):
    def __call__(self, m: MipInstance, gap: float, time_limit: float | None,
                 initial: np.ndarray | None = None) -> MipSolution: ...


_BACKENDS: dict[str, Callable[[], Backend]] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _BACKENDS[name] = factory


def available_backends() -> list[str]:
    out = []
    for name, factory in _BACKENDS.items():
        try:
            factory()
        except ImportError:
            continue
        out.append(name)
    return out


def get_backend(name: str | None = None) -> Backend:
    names = [name] if name else list(_BACKENDS)
    for n in names:
        if n not in _BACKENDS:
            raise ConfigurationError(f"unknown backend {n!r}; registered: {sorted(_BACKENDS)}")
        try:
            return _BACKENDS[n]()
        except ImportError as exc:
            if name:
                raise ConfigurationError(f"backend {n!r} unavailable: {exc}") from exc
    raise ConfigurationError("no MIP backend available; export MPS files and solve externally")


def solve(m: MipInstance, backend: str | None = None, gap: float = 1e-3,
          time_limit: float | None = None, initial: np.ndarray | None = None) -> MipSolution:
    return get_backend(backend)(m, gap, time_limit, initial)


# -- HiGHS via highspy ---------------------------------------------------------

class HighsBackend:
    def __init__(self, threads: int = 1):
        import highspy  # noqa: F401

        self.threads = threads

    def _model(self, m: MipInstance):
        import highspy

        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", self.threads)
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        lp.num_col_ = m.n_vars
        lp.num_row_ = m.n_rows
        lp.col_cost_ = np.asarray(m.c, float)
        lp.col_lower_ = np.asarray(m.lb, float)
        lp.col_upper_ = np.asarray(m.ub, float)
        lo, hi = m.row_bounds()
        lp.row_lower_ = lo
        lp.row_upper_ = hi
        lp.offset_ = float(m.c0)
        A = m.A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data
        lp.a_matrix_.num_col_ = m.n_vars
        lp.a_matrix_.num_row_ = m.n_rows
        if m.binary.any():
            lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
                               for b in m.binary]
        h.passModel(lp)
        return h

    def __call__(self, m, gap=1e-3, time_limit=None, initial=None):
        import highspy

        t0 = time.perf_counter()
        h = self._model(m)
        h.setOptionValue("mip_rel_gap", float(gap))
        if time_limit is not None:
            h.setOptionValue("time_limit", float(time_limit))
        if initial is not None and m.binary.any():
            sol = highspy.HighsSolution()
            sol.col_value = list(np.asarray(initial, float))
            sol.value_valid = True
            h.setSolution(sol)
        h.run()
        return _highs_result(h, m, t0)

    def lp_session(self, m: MipInstance) -> "HighsLpSession":
        return HighsLpSession(self._model(m.relaxed()), m)


def _highs_result(h, m: MipInstance, t0: float) -> MipSolution:
    import highspy

    ms = h.getModelStatus()
    info = h.getInfo()
    S = highspy.HighsModelStatus
    wall = time.perf_counter() - t0
    has_x = info.primal_solution_status == highspy.kSolutionStatusFeasible
    x = np.asarray(h.getSolution().col_value, float) if has_x else None
    if ms == S.kOptimal:
        status = "optimal"
    elif ms in (S.kInfeasible,):
        return MipSolution("infeasible", wall_time=wall)
    elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return MipSolution("unbounded" if ms == S.kUnbounded else "infeasible", wall_time=wall)
    elif ms == S.kTimeLimit:
        status = "time_limit"
    elif has_x:
        status = "feasible"
    else:
        raise MipError(f"HiGHS returned {h.modelStatusToString(ms)}")
    is_mip = bool(m.binary.any())
    gap = float(info.mip_gap) if is_mip else 0.0
    bound = float(info.mip_dual_bound) if is_mip else float(info.objective_function_value)
    obj = float(info.objective_function_value) if x is not None else float("nan")
    return MipSolution(status, obj, x, gap, wall, bound)


class HighsLpSession:
    """Re-solves one LP under changing column bounds (used by enumeration)."""

    def __init__(self, h, m: MipInstance):
        self.h = h
        self.m = m
        self.idx = np.arange(m.n_vars, dtype=np.int32)

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> MipSolution:
        t0 = time.perf_counter()
        self.h.changeColsBounds(len(self.idx), self.idx, np.asarray(lb, float), np.asarray(ub, float))
        self.h.run()
        return _highs_result(self.h, self.m.relaxed(), t0)


# -- scipy.optimize.milp -------------------------------------------------------

class ScipyBackend:
    def __init__(self):
        import scipy.optimize  # noqa: F401

    def __call__(self, m, gap=1e-3, time_limit=None, initial=None):
        from scipy.optimize import Bounds, LinearConstraint, milp

        t0 = time.perf_counter()
        lo, hi = m.row_bounds()
        cons = [LinearConstraint(m.A, lo, hi)] if m.n_rows else []
        opts = {"mip_rel_gap": gap}
        if time_limit is not None:
            opts["time_limit"] = time_limit
        res = milp(m.c, integrality=m.binary.astype(int), bounds=Bounds(m.lb, m.ub),
                   constraints=cons, options=opts)
        wall = time.perf_counter() - t0
        if res.status == 2:
            return MipSolution("infeasible", wall_time=wall)
        if res.status == 3:
            return MipSolution("unbounded", wall_time=wall)
        if res.x is None:
            if res.status == 1:
                return MipSolution("time_limit", wall_time=wall)
            raise MipError(res.message)
        status = {0: "optimal", 1: "time_limit"}.get(res.status, "feasible")
        gap_v = float(getattr(res, "mip_gap", 0.0) or 0.0) if m.binary.any() else 0.0
        bound = float(getattr(res, "mip_dual_bound", np.nan) or np.nan) + m.c0
        return MipSolution(status, float(res.fun) + m.c0, np.asarray(res.x), gap_v, wall, bound)

    def lp_session(self, m: MipInstance) -> "ScipyLpSession":
        return ScipyLpSession(self, m)


class ScipyLpSession:
    def __init__(self, backend: ScipyBackend, m: MipInstance):
        self.backend = backend
        self.m = m.relaxed()

    def solve(self, lb, ub) -> MipSolution:
        return self.backend(self.m.with_bounds(lb, ub), 0.0, None)


register_backend("highs", HighsBackend)
register_backend("scipy", ScipyBackend)

__all__ = ["EQ", "GE", "LE", "ConfigurationError", "available_backends", "get_backend",
           "register_backend", "solve"]
