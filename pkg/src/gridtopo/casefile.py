"""Read and write case files.

The layout follows the MATPOWER interchange format (``mpc.bus``,
``mpc.gen``, ``mpc.branch``, ``mpc.gencost``) with extension matrices for
hybrid grids and busbar splitting::

    mpc.busdc    = [id vmin vmax]
    mpc.branchdc = [id f t y poles pmin pmax]
    mpc.conv     = [id acbus dcbus smax loss_a loss_b]
    mpc.switch   = [id side f t kind partner coupler pmin pmax qmin qmax]
    mpc.load     = [id bus pd qd]              (overrides bus Pd/Qd)
    mpc.genext   = [id is_wind is_slack]       (one row per gen row)
    mpc.branchid = [id]                        (one row per branch row)
    mpc.busrole  = [side id role parent]
    mpc.bigm     = [theta phi dc]

Powers are in MW/MVAr in the file and per unit in memory.  Bus shunts
(``Gs``/``Bs``) are dropped.
"""
from __future__ import annotations

import logging
import math
import re
from pathlib import Path

from .network import (AcBranch, AcBus, Converter, DcBranch, DcBus, Generator, Load,
                      Network, Switch)

log = logging.getLogger(__name__)

_ASSIGN = re.compile(r"mpc\.(\w+)\s*=\s*")
_DEG = 180.0 / math.pi


class CaseFormatError(ValueError):
    def __init__(self, msg, line=None, section=None):
        where = []
        if section:
            where.append(f"section {section!r}")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.line = line
        self.section = section


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _token(tok: str, line: int, section: str):
    if tok.startswith("'") and tok.endswith("'") and len(tok) >= 2:
        return tok[1:-1]
    try:
        return float(tok)
    except ValueError:
        if tok.lower() in ("inf", "-inf", "nan"):
            return float(tok)
        raise CaseFormatError(f"cannot parse value {tok!r}", line, section) from None


def read_sections(text: str) -> tuple[dict, dict]:
    """Return (scalars, matrices); matrices map name -> list of (line, row)."""
    scalars: dict[str, object] = {}
    matrices: dict[str, list[tuple[int, list]]] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = _ASSIGN.search(raw)
        if not m:
            i += 1
            continue
        name, rest = m.group(1), raw[m.end():].strip()
        if rest.startswith("["):
            rows: list[tuple[int, list]] = []
            body = rest[1:]
            start = i + 1
            closed = False
            lineno = start
            while True:
                if "]" in body:
                    body, closed = body[: body.index("]")], True
                for chunk in body.split(";"):
                    toks = [t for t in re.split(r"[\s,]+", chunk.strip()) if t]
                    if toks:
                        rows.append((lineno, [_token(t, lineno, name) for t in toks]))
                if closed:
                    break
                i += 1
                if i >= len(lines):
                    raise CaseFormatError("unterminated matrix", start, name)
                lineno = i + 1
                body = _strip_comment(lines[i])
            widths = {len(r) for _, r in rows}
            if len(widths) > 1:
                raise CaseFormatError("ragged matrix rows", start, name)
            matrices[name] = rows
        else:
            val = rest.rstrip(";").strip()
            scalars[name] = _token(val, i + 1, name) if val else None
        i += 1
    return scalars, matrices


def _num(row, k, line, section, default=None):
    if k >= len(row):
        if default is None:
            raise CaseFormatError(f"missing column {k + 1}", line, section)
        return default
    v = row[k]
    if isinstance(v, str):
        raise CaseFormatError(f"column {k + 1} must be numeric", line, section)
    return v


def _flag(v) -> bool:
    return bool(v) and v != 0


def parse_case(path) -> Network:
    path = Path(path)
    return parse_case_text(path.read_text(), name=path.stem)


def parse_case_text(text: str, name: str = "case") -> Network:
    scalars, mats = read_sections(text)
    if "baseMVA" not in scalars or isinstance(scalars["baseMVA"], str):
        raise CaseFormatError("missing mpc.baseMVA", section="baseMVA")
    base = float(scalars["baseMVA"])
    for required in ("bus", "gen"):
        if required not in mats:
            raise CaseFormatError("missing section", section=required)
    cname = scalars.get("casename")
    if isinstance(cname, str):
        name = cname

    roles = {}
    for line, row in mats.get("busrole", []):
        if len(row) != 4:
            raise CaseFormatError("busrole rows need 4 columns", line, "busrole")
        side, bid, role, parent = row
        roles[(str(side), int(bid))] = (str(role), None if parent == 0 else int(parent))

    ac_buses, bus_pq = [], []
    for line, row in mats["bus"]:
        bid = int(_num(row, 0, line, "bus"))
        btype = int(_num(row, 1, line, "bus"))
        if btype == 4:
            continue
        if _num(row, 4, line, "bus") or _num(row, 5, line, "bus"):
            log.info("bus %d: shunt dropped", bid)
        role, parent = roles.get(("ac", bid), ("busbar", None))
        ac_buses.append(AcBus(id=bid, vmin=_num(row, 12, line, "bus"), vmax=_num(row, 11, line, "bus"),
                              is_reference=btype == 3, role=role, parent=parent,
                              vm0=_num(row, 7, line, "bus")))
        bus_pq.append((bid, _num(row, 2, line, "bus"), _num(row, 3, line, "bus")))

    if "load" in mats:
        loads = []
        for line, row in mats["load"]:
            loads.append(Load(int(_num(row, 0, line, "load")), int(_num(row, 1, line, "load")),
                              _num(row, 2, line, "load") / base, _num(row, 3, line, "load") / base))
    else:
        loads = [Load(k + 1, bid, pd / base, qd / base)
                 for k, (bid, pd, qd) in enumerate([x for x in bus_pq if x[1] != 0 or x[2] != 0])]

    costs = []
    for line, row in mats.get("gencost", []):
        model = int(_num(row, 0, line, "gencost"))
        if model != 2:
            raise CaseFormatError("only polynomial (model 2) costs are supported", line, "gencost")
        n = int(_num(row, 3, line, "gencost"))
        coef = [_num(row, 4 + j, line, "gencost") for j in range(n)]
        if n > 3:
            raise CaseFormatError("polynomial cost of degree > 2", line, "gencost")
        coef = [0.0] * (3 - n) + coef
        costs.append(coef)
    gen_rows = mats["gen"]
    if costs and len(costs) != len(gen_rows):
        raise CaseFormatError("gencost must have one row per generator", section="gencost")
    ext = [r for _, r in mats.get("genext", [])]
    if ext and len(ext) != len(gen_rows):
        raise CaseFormatError("genext must have one row per generator", section="genext")

    gens = []
    for k, (line, row) in enumerate(gen_rows):
        if not _num(row, 7, line, "gen"):
            continue
        c2, c1, c0 = costs[k] if costs else (0.0, 0.0, 0.0)
        if ext:
            gid, wind, slack = int(ext[k][0]), _flag(ext[k][1]), _flag(ext[k][2])
        else:
            gid, wind, slack = k + 1, False, False
        gens.append(Generator(
            id=gid, bus=int(_num(row, 0, line, "gen")),
            p_min=_num(row, 9, line, "gen") / base, p_max=_num(row, 8, line, "gen") / base,
            q_min=_num(row, 4, line, "gen") / base, q_max=_num(row, 3, line, "gen") / base,
            c2=c2 / base ** -2, c1=c1 / base ** -1, c0=c0,
            is_wind=wind, is_slack_recourse=slack,
            pg0=_num(row, 1, line, "gen") / base, qg0=_num(row, 2, line, "gen") / base,
            vg=_num(row, 5, line, "gen")))

    br_rows = mats.get("branch", [])
    br_ids = [int(r[0]) for _, r in mats.get("branchid", [])]
    if br_ids and len(br_ids) != len(br_rows):
        raise CaseFormatError("branchid must have one row per branch", section="branchid")
    branches = []
    for k, (line, row) in enumerate(br_rows):
        if not _num(row, 10, line, "branch", 1.0):
            continue
        ratio, shift = _num(row, 8, line, "branch", 0.0), _num(row, 9, line, "branch", 0.0)
        if ratio not in (0.0, 1.0) or shift != 0.0:
            raise CaseFormatError("off-nominal taps and phase shifters are not supported", line, "branch")
        rate = _num(row, 5, line, "branch", 0.0)
        lim = rate / base if rate > 0 else math.inf
        amin, amax = _num(row, 11, line, "branch", -360.0), _num(row, 12, line, "branch", 360.0)
        bound = min(abs(amin), abs(amax))
        dth = bound / _DEG if 0 < bound < 90 else math.pi / 6
        branches.append(AcBranch(
            id=br_ids[k] if br_ids else k + 1,
            from_bus=int(_num(row, 0, line, "branch")), to_bus=int(_num(row, 1, line, "branch")),
            r=_num(row, 2, line, "branch"), x=_num(row, 3, line, "branch"),
            b_charging=_num(row, 4, line, "branch"), p_max=lim, q_max=lim, dtheta_max=dth))

    dc_buses = []
    for line, row in mats.get("busdc", []):
        bid = int(_num(row, 0, line, "busdc"))
        role, parent = roles.get(("dc", bid), ("busbar", None))
        dc_buses.append(DcBus(bid, _num(row, 1, line, "busdc"), _num(row, 2, line, "busdc"), role, parent))
    dc_branches = []
    for line, row in mats.get("branchdc", []):
        dc_branches.append(DcBranch(
            int(_num(row, 0, line, "branchdc")), int(_num(row, 1, line, "branchdc")),
            int(_num(row, 2, line, "branchdc")), _num(row, 3, line, "branchdc"),
            int(_num(row, 4, line, "branchdc")),
            _num(row, 5, line, "branchdc") / base, _num(row, 6, line, "branchdc") / base))
    convs = []
    for line, row in mats.get("conv", []):
        convs.append(Converter(
            int(_num(row, 0, line, "conv")), int(_num(row, 1, line, "conv")),
            int(_num(row, 2, line, "conv")), _num(row, 3, line, "conv") / base,
            _num(row, 4, line, "conv") / base, _num(row, 5, line, "conv")))
    switches = []
    for line, row in mats.get("switch", []):
        if len(row) != 11:
            raise CaseFormatError("switch rows need 11 columns", line, "switch")
        sid, side, f, t, kind, partner, coupler = row[:7]
        if not isinstance(side, str) or not isinstance(kind, str):
            raise CaseFormatError("switch side/kind must be quoted strings", line, "switch")
        pmin, pmax, qmin, qmax = (_num(row, j, line, "switch") / base for j in range(7, 11))
        switches.append(Switch(int(sid), side, int(f), int(t), kind,
                               None if partner == 0 else int(partner),
                               None if coupler == 0 else int(coupler), pmin, pmax, qmin, qmax))
    bigm = {}
    if "bigm" in mats:
        line, row = mats["bigm"][0]
        bigm = dict(big_m_theta=_num(row, 0, line, "bigm"), big_m_phi=_num(row, 1, line, "bigm"),
                    big_m_dc=_num(row, 2, line, "bigm"))
    net = Network(base_mva=base, ac_buses=ac_buses, dc_buses=dc_buses, ac_branches=branches,
                  dc_branches=dc_branches, switches=switches, converters=convs, generators=gens,
                  loads=loads, name=name, **bigm)
    return net.validate()


# -- writing -------------------------------------------------------------------

def _enc(value: float, scale: float) -> float:
    """Float ``x`` with ``x / scale == value`` so parse(write(net)) is exact."""
    if not math.isfinite(value) or scale == 1.0:
        return value
    x = value * scale
    if x / scale == value:
        return x
    lo = hi = x
    for _ in range(64):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        if lo / scale == value:
            return lo
        if hi / scale == value:
            return hi
    raise ValueError(f"cannot encode {value!r} exactly at scale {scale!r}")


def _fmt(v) -> str:
    if isinstance(v, str):
        return f"'{v}'"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _matrix(name: str, header: str, rows) -> list[str]:
    out = [f"%% {header}", f"mpc.{name} = ["]
    out += ["\t" + "\t".join(_fmt(v) for v in row) + ";" for row in rows]
    out.append("];")
    out.append("")
    return out


def write_case(net: Network, path=None) -> str:
    base = net.base_mva
    mw = lambda v: _enc(v, base)  # noqa: E731
    demand = net.bus_demand()
    lines = [f"function mpc = {re.sub(r'[^A-Za-z0-9_]', '_', net.name)}",
             "mpc.version = '2';", f"mpc.casename = '{net.name}';", f"mpc.baseMVA = {_fmt(base)};", ""]
    rows = []
    for b in net.ac_buses:
        pd, qd = demand.get(b.id, (0.0, 0.0))
        rows.append([b.id, 3 if b.is_reference else 1, pd * base, qd * base, 0, 0, 1, b.vm0, 0,
                     0, 1, b.vmax, b.vmin])
    lines += _matrix("bus", "bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin", rows)
    rows = [[g.bus, mw(g.pg0), mw(g.qg0), mw(g.q_max), mw(g.q_min), g.vg, base, 1, mw(g.p_max),
             mw(g.p_min)] for g in net.generators]
    lines += _matrix("gen", "bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin", rows)
    rows = []
    for br in net.ac_branches:
        rate = 0.0 if math.isinf(br.p_max) else mw(br.p_max)
        deg = _enc(br.dtheta_max, _DEG)
        rows.append([br.from_bus, br.to_bus, br.r, br.x, br.b_charging, rate, rate, rate, 0, 0, 1,
                     -deg, deg])
    lines += _matrix("branch", "fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax", rows)
    rows = [[2, 0, 0, 3, _enc(g.c2, base ** -2), _enc(g.c1, base ** -1), g.c0] for g in net.generators]
    lines += _matrix("gencost", "2 startup shutdown n c2 c1 c0", rows)
    if any(not math.isinf(br.q_max) and br.q_max != br.p_max for br in net.ac_branches):
        raise ValueError("case files carry one rating per branch; q_max must equal p_max")
    lines += _matrix("load", "id bus pd qd", [[ld.id, ld.bus, mw(ld.p), mw(ld.q)] for ld in net.loads])
    lines += _matrix("genext", "id is_wind is_slack",
                     [[g.id, g.is_wind, g.is_slack_recourse] for g in net.generators])
    lines += _matrix("branchid", "id", [[br.id] for br in net.ac_branches])
    if net.dc_buses:
        lines += _matrix("busdc", "id vmin vmax", [[b.id, b.vmin, b.vmax] for b in net.dc_buses])
    if net.dc_branches:
        lines += _matrix("branchdc", "id f t y poles pmin pmax",
                         [[b.id, b.from_bus, b.to_bus, b.y, b.poles, mw(b.p_min), mw(b.p_max)]
                          for b in net.dc_branches])
    if net.converters:
        lines += _matrix("conv", "id acbus dcbus smax loss_a loss_b",
                         [[c.id, c.ac_bus, c.dc_bus, mw(c.s_max), mw(c.loss_a), c.loss_b]
                          for c in net.converters])
    if net.switches:
        lines += _matrix("switch", "id side f t kind partner coupler pmin pmax qmin qmax",
                         [[s.id, s.side, s.from_bus, s.to_bus, s.kind, s.partner or 0, s.coupler or 0,
                           mw(s.p_min), mw(s.p_max), mw(s.q_min), mw(s.q_max)] for s in net.switches])
    roles = [["ac", b.id, b.role, b.parent or 0] for b in net.ac_buses if b.role != "busbar"]
    roles += [["dc", b.id, b.role, b.parent or 0] for b in net.dc_buses if b.role != "busbar"]
    if roles:
        lines += _matrix("busrole", "side id role parent", roles)
    lines += _matrix("bigm", "theta phi dc", [[net.big_m_theta, net.big_m_phi, net.big_m_dc]])
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text
