"""Solver-agnostic sparse mixed-integer linear programs."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<", "=", ">"
FEAS_TOL = 1e-6


class MipError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MipInstance:
    """``min c.x + c0`` s.t. ``A x (sense) rhs``, ``lb <= x <= ub``."""

    names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: tuple[str, ...]
    c: np.ndarray
    c0: float = 0.0
    meta: dict = field(default_factory=dict)
    name: str = "model"

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @cached_property
    def index(self) -> dict[str, int]:
        return {n: k for k, n in enumerate(self.names)}

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == LE, -np.inf, self.rhs)
        hi = np.where(self.sense == GE, np.inf, self.rhs)
        return lo, hi

    def validate(self) -> "MipInstance":
        n = self.n_vars
        if self.A.shape != (self.n_rows, n):
            raise MipError(f"matrix shape {self.A.shape} does not match {self.n_rows} rows x {n} vars")
        for arr, what in ((self.lb, "lb"), (self.ub, "ub"), (self.binary, "binary"), (self.c, "c")):
            if len(arr) != n:
                raise MipError(f"{what} has wrong length")
        if len(self.sense) != self.n_rows or len(self.rhs) != self.n_rows:
            raise MipError("row data has wrong length")
        if not np.isin(self.sense, [LE, EQ, GE]).all():
            raise MipError("unknown row sense")
        b = self.binary
        if (self.lb[b] < 0).any() or (self.ub[b] > 1).any():
            raise MipError("binary variable with bounds outside [0, 1]")
        if (self.lb > self.ub).any():
            raise MipError("variable with lb > ub")
        if len(set(self.names)) != n or len(set(self.row_names)) != self.n_rows:
            raise MipError("duplicate variable or row name")
        return self

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of rows, bounds and integrality at ``x``."""
        act = self.A @ x
        lo, hi = self.row_bounds()
        v = [0.0]
        if self.n_rows:
            v.append(np.max(np.maximum(lo - act, 0)))
            v.append(np.max(np.maximum(act - hi, 0)))
        if self.n_vars:
            v.append(np.max(np.maximum(self.lb - x, 0)))
            v.append(np.max(np.maximum(x - self.ub, 0)))
            if self.binary.any():
                xb = x[self.binary]
                v.append(np.max(np.abs(xb - np.round(xb))))
        return float(max(v))

    def with_bounds(self, lb=None, ub=None) -> "MipInstance":
        return MipInstance(self.names, self.lb if lb is None else lb, self.ub if ub is None else ub,
                           self.binary, self.A, self.sense, self.rhs, self.row_names, self.c,
                           self.c0, self.meta, self.name)

    def relaxed(self) -> "MipInstance":
        return MipInstance(self.names, self.lb, self.ub, np.zeros(self.n_vars, bool), self.A,
                           self.sense, self.rhs, self.row_names, self.c, self.c0, self.meta, self.name)


@dataclass
class MipSolution:
    status: str  # optimal | feasible | infeasible | time_limit | unbounded
    objective: float = float("nan")
    x: np.ndarray | None = None
    mip_gap: float = float("nan")
    wall_time: float = 0.0
    bound: float = float("nan")
    n_enumerated: int | None = None

    @property
    def has_solution(self) -> bool:
        return self.x is not None


class MipBuilder:
    """Accumulates columns and rows, then freezes them into a MipInstance."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._bin: list[bool] = []
        self._cost: dict[int, float] = {}
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self.c0 = 0.0
        self.meta: dict[str, tuple] = {}

    @property
    def n_vars(self) -> int:
        return len(self._names)

    def var(self, name: str, lb: float = 0.0, ub: float = np.inf, binary: bool = False,
            meta: tuple | None = None) -> int:
        k = len(self._names)
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        self._bin.append(binary)
        if meta is not None:
            self.meta[name] = meta
        return k

    def set_bounds(self, k: int, lb: float, ub: float) -> None:
        self._lb[k] = lb
        self._ub[k] = ub

    def bounds(self, k: int) -> tuple[float, float]:
        return self._lb[k], self._ub[k]

    def cost(self, k: int, coef: float) -> None:
        self._cost[k] = self._cost.get(k, 0.0) + coef

    def row(self, name: str, cols, vals, sense: str, rhs: float) -> int:
        r = len(self._sense)
        for c, v in zip(cols, vals):
            if v != 0.0:
                self._rows.append(r)
                self._cols.append(c)
                self._vals.append(v)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name)
        return r

    def build(self) -> MipInstance:
        n, m = len(self._names), len(self._sense)
        A = sp.csr_matrix((np.asarray(self._vals, float), (np.asarray(self._rows, int),
                                                            np.asarray(self._cols, int))), shape=(m, n))
        A.sum_duplicates()
        c = np.zeros(n)
        for k, v in self._cost.items():
            c[k] = v
        inst = MipInstance(tuple(self._names), np.asarray(self._lb, float), np.asarray(self._ub, float),
                           np.asarray(self._bin, bool), A, np.asarray(self._sense, dtype="<U1"),
                           np.asarray(self._rhs, float), tuple(self._row_names), c, float(self.c0),
                           dict(self.meta), self.name)
        return inst.validate()
