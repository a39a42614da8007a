"""Case text parsing and serialization (MATPOWER-style matrix subset).

Supported content: ``mpc.baseMVA`` plus the ``bus``, ``gen``, ``branch`` and
``gencost`` matrices in the conventional column layout.  Impedances are
already per-unit in the format; loads and limits stay in physical units.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .network import (
    Branch,
    BranchKind,
    Bus,
    BusType,
    CostModel,
    Generator,
    PowerSystem,
    validate_network,
)

BUILTIN_CASES = ("case14", "case30", "case57", "case118", "case300")


class CaseSyntaxError(ValueError):
    def __init__(self, line: int, column: int, expected: str):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"line {line}, column {column}: expected {expected}")


class UnsupportedFeatureError(ValueError):
    def __init__(self, name: str):
        self.feature = name
        super().__init__(f"unsupported case feature: {name}")


class SemanticsError(ValueError):
    pass


class UnknownCaseError(LookupError):
    def __init__(self, name: str):
        super().__init__(f"unknown case {name!r}; supported: {', '.join(BUILTIN_CASES)}")
        self.name = name


class CaseOrigin(enum.Enum):
    BUILTIN = "builtin"
    FILE = "file"


@dataclass(frozen=True)
class CaseSource:
    name: str
    origin: CaseOrigin
    raw_text: str
    checksum: str


def text_checksum(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# parsing

_ASSIGN_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_FUNC_RE = re.compile(r"^\s*function\s+mpc\s*=\s*(\w+)")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_row(line: str, lineno: int) -> list[float]:
    body = line.strip().rstrip(";").strip()
    values = []
    col = 1
    for tok in body.split():
        try:
            values.append(float(tok))
        except ValueError:
            raise CaseSyntaxError(lineno, col, f"a number, found {tok!r}") from None
        col += len(tok) + 1
    return values


def _parse_matrices(text: str) -> tuple[dict, Optional[str]]:
    """Raw scan: scalar assignments and numeric matrices keyed by mpc field name."""
    fields: dict[str, object] = {}
    case_name: Optional[str] = None
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = _FUNC_RE.match(raw)
        if m:
            case_name = m.group(1)
            i += 1
            continue
        m = _ASSIGN_RE.match(raw)
        if not m:
            if raw.strip():
                first = len(lines[i]) - len(lines[i].lstrip()) + 1
                if not re.match(r"^\s*(mpc\.version|function|\s*$)", raw):
                    raise CaseSyntaxError(i + 1, first, "'mpc.<field> = ...' assignment")
            i += 1
            continue
        name, rest = m.group(1), m.group(2).strip()
        if name == "version":
            i += 1
            continue
        if rest.startswith("["):
            rows: list[list[float]] = []
            rest_body = rest[1:]
            closed = False
            lineno = i + 1
            if "];" in rest_body or "]" in rest_body:
                body = rest_body.split("]")[0].strip()
                if body:
                    rows.append(_parse_row(body, lineno))
                closed = True
            elif rest_body.strip():
                rows.append(_parse_row(rest_body, lineno))
            while not closed:
                i += 1
                if i >= len(lines):
                    raise CaseSyntaxError(lineno, 1, f"closing '];' for mpc.{name}")
                body = _strip_comment(lines[i]).strip()
                if body.startswith("]"):
                    closed = True
                    break
                if body.endswith("];") or body.endswith("]"):
                    body = body.rstrip(";").rstrip("]").strip()
                    closed = True
                if body:
                    rows.append(_parse_row(body, i + 1))
            fields[name] = rows
        else:
            try:
                fields[name] = float(rest.rstrip(";"))
            except ValueError:
                raise CaseSyntaxError(i + 1, 1, f"numeric value for mpc.{name}") from None
        i += 1
    return fields, case_name


_BUS_TYPE = {1: BusType.PQ, 2: BusType.PV, 3: BusType.SLACK}


def parse_case(text: str, name: str = "") -> PowerSystem:
    """Parse case text into a validated PowerSystem."""
    fields, func_name = _parse_matrices(text)
    case_name = name or func_name or "case"

    for required in ("baseMVA", "bus", "gen", "branch", "gencost"):
        if required not in fields:
            raise UnsupportedFeatureError(f"missing mpc.{required}")

    base_mva = float(fields["baseMVA"])  # type: ignore[arg-type]

    buses: list[Bus] = []
    for idx, row in enumerate(fields["bus"]):  # type: ignore[union-attr]
        if len(row) < 13:
            raise UnsupportedFeatureError(f"bus row with {len(row)} columns (need 13)")
        bus_id, bus_type = int(row[0]), int(row[1])
        if bus_type not in _BUS_TYPE:
            raise SemanticsError(f"bus {bus_id}: unsupported bus type {bus_type}")
        buses.append(Bus(
            id=bus_id, index=idx, bus_type=_BUS_TYPE[bus_type],
            pd_mw=row[2], qd_mvar=row[3], gs_mw=row[4], bs_mvar=row[5],
            vm_pu=row[7], va_deg=row[8], base_kv=row[9],
            vmax_pu=row[11], vmin_pu=row[12]))

    ids = {b.id for b in buses}

    gens: list[Generator] = []
    for row in fields["gen"]:  # type: ignore[union-attr]
        if len(row) < 10:
            raise UnsupportedFeatureError(f"gen row with {len(row)} columns (need >= 10)")
        bus_id = int(row[0])
        if bus_id not in ids:
            raise SemanticsError(f"generator references missing bus {bus_id}")
        gens.append(Generator(
            bus_id=bus_id, pg_mw=row[1], qg_mvar=row[2], qmax_mvar=row[3], qmin_mvar=row[4],
            vg_pu=row[5], mbase_mva=row[6] or base_mva, in_service=row[7] > 0,
            pmax_mw=row[8], pmin_mw=row[9]))

    branches: list[Branch] = []
    for i, row in enumerate(fields["branch"]):  # type: ignore[union-attr]
        if len(row) < 11:
            raise UnsupportedFeatureError(f"branch row with {len(row)} columns (need >= 11)")
        f_bus, t_bus = int(row[0]), int(row[1])
        for end in (f_bus, t_bus):
            if end not in ids:
                raise SemanticsError(f"branch {i} references missing bus {end}")
        ratio, shift = row[8], row[9]
        if ratio < 0:
            raise SemanticsError(f"branch {i}: negative tap ratio {ratio}")
        # An explicit ratio, even 1.0, marks a transformer; 0 marks a line.
        kind = BranchKind.TRANSFORMER if ratio > 0 else BranchKind.LINE
        branches.append(Branch(
            from_bus=f_bus, to_bus=t_bus, r_pu=row[2], x_pu=row[3], b_pu=row[4],
            rating_mva=row[5], tap_ratio=ratio if ratio > 0 else 1.0, shift_deg=shift,
            kind=kind, in_service=row[10] > 0))

    costs: list[CostModel] = []
    for g_i, row in enumerate(fields["gencost"]):  # type: ignore[union-attr]
        if len(row) < 4:
            raise UnsupportedFeatureError(f"gencost row with {len(row)} columns")
        model, n = int(row[0]), int(row[3])
        if model == 1:
            raise UnsupportedFeatureError("piecewise-linear generator cost")
        if model != 2:
            raise UnsupportedFeatureError(f"generator cost model {model}")
        if n > 3:
            raise UnsupportedFeatureError(f"polynomial cost of degree {n - 1} (max 2)")
        coeffs = list(row[4:4 + n])
        while len(coeffs) < 3:
            coeffs.insert(0, 0.0)
        c2, c1, c0 = coeffs
        costs.append(CostModel(c2=c2, c1=c1, c0=c0))

    if len(costs) != len(gens):
        raise SemanticsError(f"{len(costs)} gencost rows for {len(gens)} generators")

    net = PowerSystem(case_name=case_name, base_mva=base_mva, buses=tuple(buses),
                      generators=tuple(gens), branches=tuple(branches), cost_models=tuple(costs))
    report = validate_network(net)
    if not report.ok:
        raise SemanticsError("; ".join(report.messages()))
    return net


# ---------------------------------------------------------------------------
# builtin catalog


def builtin_text(name: str) -> str:
    if name not in BUILTIN_CASES:
        raise UnknownCaseError(name)
    return resources.files("gridbench.cases").joinpath(f"{name}.m").read_text(encoding="utf-8")


def load_source(name: str, case_dir: Optional[str] = None) -> CaseSource:
    """Case text by name, from ``case_dir`` when given, else the embedded catalog."""
    if case_dir is not None:
        path = Path(case_dir) / f"{name}.m"
        if not path.exists():
            raise UnknownCaseError(name)
        text = path.read_text(encoding="utf-8")
        return CaseSource(name=name, origin=CaseOrigin.FILE, raw_text=text,
                          checksum=text_checksum(text))
    text = builtin_text(name)
    return CaseSource(name=name, origin=CaseOrigin.BUILTIN, raw_text=text,
                      checksum=text_checksum(text))


def load_builtin(name: str) -> PowerSystem:
    return parse_case(builtin_text(name), name=name)


# ---------------------------------------------------------------------------
# serialization

_BT_CODE = {BusType.PQ: 1, BusType.PV: 2, BusType.SLACK: 3}


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return format(x, ".17g")


def serialize_case(net: PowerSystem) -> str:
    """Case text whose parse equals ``net`` in value terms, element order preserved."""
    out: list[str] = [f"function mpc = {net.case_name}", "mpc.version = '2';", ""]
    out.append(f"mpc.baseMVA = {_num(net.base_mva)};")

    out.append("")
    out.append("%% bus data")
    out.append("mpc.bus = [")
    for b in net.buses:
        vm = b.vm_pu if b.vm_pu is not None else 1.0
        va = b.va_deg if b.va_deg is not None else 0.0
        row = [b.id, _BT_CODE[b.bus_type], b.pd_mw, b.qd_mvar, b.gs_mw, b.bs_mvar,
               1, vm, va, b.base_kv, 1, b.vmax_pu, b.vmin_pu]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out.append("];")

    out.append("")
    out.append("%% generator data")
    out.append("mpc.gen = [")
    for g in net.generators:
        row = [g.bus_id, g.pg_mw, g.qg_mvar, g.qmax_mvar, g.qmin_mvar, g.vg_pu,
               g.mbase_mva, 1 if g.in_service else 0, g.pmax_mw, g.pmin_mw,
               0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out.append("];")

    out.append("")
    out.append("%% branch data")
    out.append("mpc.branch = [")
    for br in net.branches:
        ratio = br.tap_ratio if br.kind is BranchKind.TRANSFORMER else 0
        row = [br.from_bus, br.to_bus, br.r_pu, br.x_pu, br.b_pu,
               br.rating_mva, 0, 0, ratio, br.shift_deg,
               1 if br.in_service else 0, -360, 360]
        out.append("\t" + "\t".join(_num(v) for v in row) + ";")
    out.append("];")

    out.append("")
    out.append("%% generator cost data")
    out.append("mpc.gencost = [")
    for c in net.cost_models:
        out.append("\t" + "\t".join(_num(v) for v in [2, 0, 0, 3, c.c2, c.c1, c.c0]) + ";")
    out.append("];")
    out.append("")
    return "\n".join(out)
