"""Fixed-format MPS export and import.

Names longer than eight characters (or containing blanks) do not fit the
fixed-format name fields.  When any column name is too long, every column
is renamed ``C0000000``, ``C0000001`` ... in order; rows likewise become
``R0000000`` ...  The original names go to a CSV mapping file written next
to the model (``<path>.names.csv``) so that ``read_mps`` can restore them.

Numbers are written with the shortest representation that round-trips the
binary64 value.  Such a string can be longer than the 12-character numeric
field; the field is then widened rather than rounded, which whitespace
tokenizing readers (including HiGHS) accept.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import EQ, GE, LE, MipError, MipInstance

OBJ_ROW = "COST"
NAME_WIDTH = 8
_SENSE_CODE = {LE: "L", EQ: "E", GE: "G"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


def mapping_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".names.csv")


def _fits(name: str) -> bool:
    return 0 < len(name) <= NAME_WIDTH and not any(ch.isspace() for ch in name)


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _line(code: str, n1: str, n2: str = "", v: str = "") -> str:
    s = f" {code:<2} {n1:<8}"
    if n2:
        s += f"  {n2:<8}  {v:>12}"
    return s.rstrip()


def short_names(m: MipInstance) -> tuple[list[str], list[str], bool, bool]:
    cols, rows = list(m.names), list(m.row_names)
    ren_c = not all(_fits(n) for n in cols)
    ren_r = not all(_fits(n) for n in rows) or OBJ_ROW in rows
    if ren_c:
        cols = [f"C{k:07d}" for k in range(len(cols))]
    if ren_r:
        rows = [f"R{k:07d}" for k in range(len(rows))]
    return cols, rows, ren_c, ren_r


def export_mps(m: MipInstance, path) -> Path | None:
    """Write ``m`` as fixed-format MPS; returns the mapping file path if one was written."""
    m.validate()
    path = Path(path)
    cols, rows, ren_c, ren_r = short_names(m)
    out = [f"NAME          {m.name[:NAME_WIDTH] or 'MODEL'}", "ROWS", f" N  {OBJ_ROW}"]
    out += [f" {_SENSE_CODE[s]}  {r}" for s, r in zip(m.sense, rows)]
    out.append("COLUMNS")
    A = m.A.tocsc()
    in_int = False
    n_marker = 0
    for j in range(m.n_vars):
        if bool(m.binary[j]) != in_int:
            tag = "INTORG" if not in_int else "INTEND"
            out.append(f"    MARKER{n_marker:04d}  'MARKER'                 '{tag}'")
            n_marker += tag == "INTEND"
            in_int = not in_int
        entries = []
        if m.c[j] != 0:
            entries.append((OBJ_ROW, m.c[j]))
        for p in range(A.indptr[j], A.indptr[j + 1]):
            entries.append((rows[A.indices[p]], A.data[p]))
        if not entries:
            entries.append((OBJ_ROW, 0.0))
        out += [_line("", cols[j], r, _num(v)) for r, v in entries]
    if in_int:
        out.append(f"    MARKER{n_marker:04d}  'MARKER'                 'INTEND'")
    out.append("RHS")
    if m.c0 != 0:
        out.append(_line("", "RHS", OBJ_ROW, _num(-m.c0)))
    out += [_line("", "RHS", rows[i], _num(m.rhs[i])) for i in range(m.n_rows) if m.rhs[i] != 0]
    bounds = []
    for j in range(m.n_vars):
        lo, up, c = m.lb[j], m.ub[j], cols[j]
        if m.binary[j] and lo == 0 and up == 1:
            bounds.append(_line("BV", "BND", c, ""))
            bounds[-1] = f" BV BND       {c}"
        elif lo == up:
            bounds.append(_line("FX", "BND", c, _num(lo)))
        elif lo == -np.inf and up == np.inf:
            bounds.append(f" FR BND       {c}")
        else:
            if lo == -np.inf:
                bounds.append(f" MI BND       {c}")
            elif lo != 0 or m.binary[j]:
                bounds.append(_line("LO", "BND", c, _num(lo)))
            if up != np.inf:
                bounds.append(_line("UP", "BND", c, _num(up)))
    if bounds:
        out.append("BOUNDS")
        out += bounds
    out.append("ENDATA")
    path.write_text("\n".join(out) + "\n")
    mp = mapping_path(path)
    if ren_c or ren_r:
        with mp.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "short", "name"])
            if ren_c:
                w.writerows(("col", s, n) for s, n in zip(cols, m.names))
            if ren_r:
                w.writerows(("row", s, n) for s, n in zip(rows, m.row_names))
        return mp
    if mp.exists():
        mp.unlink()
    return None


def read_mps(path, mapping: str | Path | None = "auto") -> MipInstance:
    """Parse an MPS file (fixed or free layout, names without blanks)."""
    path = Path(path)
    section = None
    name = "model"
    obj = None
    rows: list[str] = []
    sense: list[str] = []
    row_idx: dict[str, int] = {}
    cols: list[str] = []
    col_idx: dict[str, int] = {}
    binary: list[bool] = []
    cost: dict[int, float] = {}
    trip: list[tuple[int, int, float]] = []
    rhs: dict[int, float] = {}
    c0 = 0.0
    bnd: dict[int, list] = defaultdict(lambda: [None, None])
    in_int = False

    def col(cn):
        if cn not in col_idx:
            col_idx[cn] = len(cols)
            cols.append(cn)
            binary.append(in_int)
        return col_idx[cn]

    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0].upper()
            if section == "NAME" and len(tok) > 1:
                name = tok[1]
            if section not in ("NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA", "OBJSENSE"):
                raise MipError(f"{path}:{lineno}: unknown section {section}")
            continue
        try:
            if section == "ROWS":
                code, rn = tok[0].upper(), tok[1]
                if code == "N":
                    if obj is None:
                        obj = rn
                    continue
                row_idx[rn] = len(rows)
                rows.append(rn)
                sense.append(_CODE_SENSE[code])
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1].strip("'") == "MARKER":
                    in_int = tok[2].strip("'") == "INTORG"
                    continue
                j = col(tok[0])
                for rn, v in zip(tok[1::2], tok[2::2]):
                    if rn == obj:
                        cost[j] = cost.get(j, 0.0) + float(v)
                    elif rn in row_idx:
                        trip.append((row_idx[rn], j, float(v)))
                    else:
                        raise MipError(f"unknown row {rn}")
            elif section == "RHS":
                pairs = tok[1:] if len(tok) % 2 == 1 else tok
                for rn, v in zip(pairs[::2], pairs[1::2]):
                    if rn == obj:
                        c0 = -float(v)
                    else:
                        rhs[row_idx[rn]] = float(v)
            elif section == "RANGES":
                raise MipError(f"{path}:{lineno}: RANGES are not supported")
            elif section == "BOUNDS":
                code, cn = tok[0].upper(), tok[2]
                j = col(cn)
                v = float(tok[3]) if len(tok) > 3 else None
                b = bnd[j]
                if code == "BV":
                    b[:] = [0.0, 1.0]
                    binary[j] = True
                elif code == "FX":
                    b[:] = [v, v]
                elif code == "FR":
                    b[:] = [-np.inf, np.inf]
                elif code == "MI":
                    b[0] = -np.inf
                elif code == "PL":
                    b[1] = np.inf
                elif code == "LO":
                    b[0] = v
                elif code == "UP":
                    b[1] = v
                else:
                    raise MipError(f"{path}:{lineno}: unsupported bound type {code}")
        except (IndexError, KeyError, ValueError) as exc:
            raise MipError(f"{path}:{lineno}: malformed {section} record: {raw.strip()}") from exc

    n = len(cols)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for j in range(n):
        if binary[j]:
            ub[j] = 1.0
        lo, up = bnd[j] if j in bnd else (None, None)
        if lo is not None:
            lb[j] = lo
        if up is not None:
            ub[j] = up
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    r, k, v = (np.array(a) for a in zip(*trip)) if trip else (np.zeros(0, int),) * 2 + (np.zeros(0),)
    A = sp.csr_matrix((v.astype(float), (r.astype(int), k.astype(int))), shape=(len(rows), n))
    rhs_arr = np.array([rhs.get(i, 0.0) for i in range(len(rows))])

    if mapping == "auto":
        mp = mapping_path(path)
        mapping = mp if mp.exists() else None
    if mapping is not None:
        cmap, rmap = {}, {}
        with Path(mapping).open(newline="") as fh:
            for rec in csv.DictReader(fh):
                (cmap if rec["kind"] == "col" else rmap)[rec["short"]] = rec["name"]
        cols = [cmap.get(s, s) for s in cols]
        rows = [rmap.get(s, s) for s in rows]
    return MipInstance(tuple(cols), lb, ub, np.array(binary, bool), A,
                       np.array(sense, dtype="<U1"), rhs_arr, tuple(rows), c, c0, {}, name).validate()
