"""In-memory power-system model: immutable network values, edit primitives, topology queries.

All solver and agent modules share this representation.  Networks are value
objects: every edit goes through :func:`apply_modification`, which returns a
new ``PowerSystem`` and never mutates its input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional


class BusType(enum.Enum):
    SLACK = "slack"
    PV = "PV"
    PQ = "PQ"


class BranchKind(enum.Enum):
    LINE = "line"
    TRANSFORMER = "transformer"


class ModKind(enum.Enum):
    SET_BUS_LOAD = "set_bus_load"
    SCALE_BUS_LOAD = "scale_bus_load"
    BRANCH_OUTAGE = "branch_outage"
    BRANCH_RESTORE = "branch_restore"
    SET_GEN_LIMIT = "set_gen_limit"


class UnknownTargetError(LookupError):
    """Modification target does not resolve against the network."""


class AlreadyOutOfServiceError(ValueError):
    """Branch outage requested for a branch that is already out of service."""


class AlreadyInServiceError(ValueError):
    """Branch restore requested for a branch that is already in service."""


@dataclass(frozen=True)
class Bus:
    id: int                      # external bus number, preserved for display
    index: int                   # dense zero-based position
    bus_type: BusType
    pd_mw: float = 0.0
    qd_mvar: float = 0.0
    gs_mw: float = 0.0           # shunt conductance, MW consumed at 1.0 p.u.
    bs_mvar: float = 0.0         # shunt susceptance, MVAr injected at 1.0 p.u.
    vmin_pu: float = 0.94
    vmax_pu: float = 1.06
    base_kv: float = 0.0
    vm_pu: Optional[float] = None   # last solved state, if any
    va_deg: Optional[float] = None


@dataclass(frozen=True)
class Generator:
    bus_id: int
    pg_mw: float = 0.0
    qg_mvar: float = 0.0
    qmax_mvar: float = 0.0
    qmin_mvar: float = 0.0
    vg_pu: float = 1.0
    mbase_mva: float = 100.0
    pmax_mw: float = 0.0
    pmin_mw: float = 0.0
    in_service: bool = True


@dataclass(frozen=True)
class Branch:
    from_bus: int                # external ids
    to_bus: int
    r_pu: float
    x_pu: float
    b_pu: float = 0.0            # total line charging on system base
    rating_mva: float = 0.0      # 0 means unlimited
    tap_ratio: float = 1.0       # 1.0 for lines
    shift_deg: float = 0.0
    kind: BranchKind = BranchKind.LINE
    in_service: bool = True


@dataclass(frozen=True)
class CostModel:
    """Polynomial generation cost c2*P^2 + c1*P + c0 with P in MW."""

    c2: float = 0.0              # $/MW^2 h, must be >= 0 (convexity)
    c1: float = 0.0              # $/MWh
    c0: float = 0.0              # $/h
    kind: str = "polynomial"


@dataclass(frozen=True)
class Modification:
    """One entry of the chronological diff log.

    ``target`` is a bus id for load edits, a branch index for outage or
    restore, and a generator index for limit edits.  ``payload`` carries the
    numeric parameters of the edit.
    """

    kind: ModKind
    target: int
    payload: dict[str, float] = field(default_factory=dict)
    timestamp: float = 0.0
    note: str = ""

    def canonical(self) -> str:
        items = ",".join(f"{k}={self.payload[k]!r}" for k in sorted(self.payload))
        return f"{self.kind.value}|{self.target}|{items}"


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]


@dataclass(frozen=True)
class PowerSystem:
    case_name: str
    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    cost_models: tuple[CostModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "cost_models", tuple(self.cost_models))

    # -- lookups ---------------------------------------------------------

    def bus_index(self, bus_id: int) -> int:
        """Dense index of an external bus number; raises UnknownTargetError."""
        idx = self._id_map().get(bus_id)
        if idx is None:
            raise UnknownTargetError(f"unknown bus id {bus_id}")
        return idx

    def _id_map(self) -> dict[int, int]:
        cached = getattr(self, "_id_map_cache", None)
        if cached is None:
            cached = {b.id: b.index for b in self.buses}
            object.__setattr__(self, "_id_map_cache", cached)
        return cached

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._id_map()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    def lines(self) -> list[int]:
        """Branch indices of kind line, in branch order."""
        return [i for i, br in enumerate(self.branches) if br.kind is BranchKind.LINE]

    def transformers(self) -> list[int]:
        return [i for i, br in enumerate(self.branches) if br.kind is BranchKind.TRANSFORMER]

    def branch_label(self, idx: int) -> str:
        br = self.branches[idx]
        return f"{br.from_bus}-{br.to_bus}"

    def total_load_mw(self) -> float:
        return sum(b.pd_mw for b in self.buses)


# ---------------------------------------------------------------------------
# validation


def validate_network(net: PowerSystem) -> ValidationReport:
    """Check every structural invariant; the report lists all violations found."""
    v: list[Violation] = []

    if net.base_mva <= 0:
        v.append(Violation("base_mva", "system", f"base_mva must be positive, got {net.base_mva}"))

    seen_ids: set[int] = set()
    for b in net.buses:
        if b.id in seen_ids:
            v.append(Violation("duplicate_bus", f"bus {b.id}", f"duplicate bus id {b.id}"))
        seen_ids.add(b.id)
        if not (0 < b.vmin_pu <= b.vmax_pu):
            v.append(Violation("voltage_limits", f"bus {b.id}",
                               f"bad voltage band [{b.vmin_pu}, {b.vmax_pu}] at bus {b.id}"))

    ids = {b.id for b in net.buses}
    for i, br in enumerate(net.branches):
        if br.from_bus not in ids or br.to_bus not in ids:
            v.append(Violation("dangling_branch", f"branch {i}",
                               f"branch {i} references missing bus "
                               f"{br.from_bus if br.from_bus not in ids else br.to_bus}"))
        if br.x_pu == 0:
            v.append(Violation("zero_reactance", f"branch {i}", f"zero series reactance, branch {i}"))
        if br.tap_ratio <= 0:
            v.append(Violation("tap_ratio", f"branch {i}",
                               f"tap ratio must be positive, branch {i} has {br.tap_ratio}"))

    for g_i, g in enumerate(net.generators):
        if g.bus_id not in ids:
            v.append(Violation("dangling_gen", f"generator {g_i}",
                               f"generator {g_i} references missing bus {g.bus_id}"))
        if g.pmin_mw > g.pmax_mw:
            v.append(Violation("gen_p_limits", f"generator {g_i}",
                               f"generator {g_i} has pmin {g.pmin_mw} > pmax {g.pmax_mw}"))
        if g.qmin_mvar > g.qmax_mvar:
            v.append(Violation("gen_q_limits", f"generator {g_i}",
                               f"generator {g_i} has qmin {g.qmin_mvar} > qmax {g.qmax_mvar}"))

    if len(net.cost_models) != len(net.generators):
        v.append(Violation("cost_models", "system",
                           f"{len(net.cost_models)} cost models for {len(net.generators)} generators"))
    for g_i, cm in enumerate(net.cost_models):
        if cm.c2 < 0:
            v.append(Violation("nonconvex_cost", f"generator {g_i}",
                               f"generator {g_i} cost has negative quadratic coefficient {cm.c2}"))

    # slack check runs only over buses that exist
    if not any(x.code.startswith("dangling") or x.code == "duplicate_bus" for x in v):
        comps = connected_components(net)
        gen_buses = {net.bus_index(g.bus_id) for g in net.generators if g.in_service}
        for c_i, comp in enumerate(comps):
            slacks = [i for i in comp if net.buses[i].bus_type is BusType.SLACK]
            if gen_buses & set(comp):
                if not slacks:
                    v.append(Violation("no_slack", f"component {c_i}", f"no slack in component {c_i}"))
                elif len(slacks) > 1:
                    v.append(Violation("multi_slack", f"component {c_i}",
                                       f"{len(slacks)} slack buses in component {c_i}"))

    return ValidationReport(tuple(v))


# ---------------------------------------------------------------------------
# topology


def connected_components(net: PowerSystem) -> list[list[int]]:
    """Partition bus indices by connectivity over in-service branches.

    Components are sorted internally and ordered by their smallest index.
    """
    n = net.n_bus
    adj: list[list[int]] = [[] for _ in range(n)]
    idx = net._id_map()
    for br in net.branches:
        if not br.in_service:
            continue
        f, t = idx.get(br.from_bus), idx.get(br.to_bus)
        if f is None or t is None:
            continue
        adj[f].append(t)
        adj[t].append(f)

    seen = [False] * n
    comps: list[list[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


# ---------------------------------------------------------------------------
# modifications


def apply_modification(net: PowerSystem, mod: Modification) -> PowerSystem:
    """Apply one edit, returning a new network value; the input is unchanged."""
    if mod.kind is ModKind.SET_BUS_LOAD:
        i = net.bus_index(mod.target)
        bus = net.buses[i]
        new_bus = replace(bus,
                          pd_mw=float(mod.payload.get("p_mw", bus.pd_mw)),
                          qd_mvar=float(mod.payload.get("q_mvar", bus.qd_mvar)))
        return _with_bus(net, i, new_bus)

    if mod.kind is ModKind.SCALE_BUS_LOAD:
        i = net.bus_index(mod.target)
        factor = float(mod.payload["factor"])
        bus = net.buses[i]
        new_bus = replace(bus, pd_mw=bus.pd_mw * factor, qd_mvar=bus.qd_mvar * factor)
        return _with_bus(net, i, new_bus)

    if mod.kind in (ModKind.BRANCH_OUTAGE, ModKind.BRANCH_RESTORE):
        if not 0 <= mod.target < net.n_branch:
            raise UnknownTargetError(f"unknown branch index {mod.target}")
        br = net.branches[mod.target]
        if mod.kind is ModKind.BRANCH_OUTAGE:
            if not br.in_service:
                raise AlreadyOutOfServiceError(f"branch {mod.target} is already out of service")
            return _with_branch(net, mod.target, replace(br, in_service=False))
        if br.in_service:
            raise AlreadyInServiceError(f"branch {mod.target} is already in service")
        return _with_branch(net, mod.target, replace(br, in_service=True))

    if mod.kind is ModKind.SET_GEN_LIMIT:
        if not 0 <= mod.target < net.n_gen:
            raise UnknownTargetError(f"unknown generator index {mod.target}")
        g = net.generators[mod.target]
        new_gen = replace(g,
                          pmin_mw=float(mod.payload.get("pmin_mw", g.pmin_mw)),
                          pmax_mw=float(mod.payload.get("pmax_mw", g.pmax_mw)),
                          qmin_mvar=float(mod.payload.get("qmin_mvar", g.qmin_mvar)),
                          qmax_mvar=float(mod.payload.get("qmax_mvar", g.qmax_mvar)))
        gens = list(net.generators)
        gens[mod.target] = new_gen
        return replace(net, generators=tuple(gens))

    raise ValueError(f"unsupported modification kind {mod.kind}")


def inverse_modification(net: PowerSystem, mod: Modification) -> Modification:
    """Modification that undoes ``mod`` when applied to apply_modification(net, mod)."""
    if mod.kind is ModKind.SET_BUS_LOAD:
        bus = net.buses[net.bus_index(mod.target)]
        return Modification(ModKind.SET_BUS_LOAD, mod.target,
                            {"p_mw": bus.pd_mw, "q_mvar": bus.qd_mvar},
                            note=f"undo {mod.note}" if mod.note else "undo set_bus_load")
    if mod.kind is ModKind.SCALE_BUS_LOAD:
        factor = float(mod.payload["factor"])
        if factor == 0:
            bus = net.buses[net.bus_index(mod.target)]
            return Modification(ModKind.SET_BUS_LOAD, mod.target,
                                {"p_mw": bus.pd_mw, "q_mvar": bus.qd_mvar}, note="undo zero scale")
        return Modification(ModKind.SCALE_BUS_LOAD, mod.target, {"factor": 1.0 / factor})
    if mod.kind is ModKind.BRANCH_OUTAGE:
        return Modification(ModKind.BRANCH_RESTORE, mod.target, {})
    if mod.kind is ModKind.BRANCH_RESTORE:
        return Modification(ModKind.BRANCH_OUTAGE, mod.target, {})
    if mod.kind is ModKind.SET_GEN_LIMIT:
        g = net.generators[mod.target]
        return Modification(ModKind.SET_GEN_LIMIT, mod.target,
                            {"pmin_mw": g.pmin_mw, "pmax_mw": g.pmax_mw,
                             "qmin_mvar": g.qmin_mvar, "qmax_mvar": g.qmax_mvar})
    raise ValueError(f"unsupported modification kind {mod.kind}")


def replay(baseline: PowerSystem, mods: Iterable[Modification]) -> PowerSystem:
    """Apply a diff log in order; reconstructs the current network from the baseline."""
    net = baseline
    for mod in mods:
        net = apply_modification(net, mod)
    return net


def _with_bus(net: PowerSystem, index: int, bus: Bus) -> PowerSystem:
    buses = list(net.buses)
    buses[index] = bus
    return replace(net, buses=tuple(buses))


def _with_branch(net: PowerSystem, index: int, branch: Branch) -> PowerSystem:
    branches = list(net.branches)
    branches[index] = branch
    return replace(net, branches=tuple(branches))


# ---------------------------------------------------------------------------
# serialization of values (used by session persistence and digest chaining)


def bus_to_dict(b: Bus) -> dict[str, Any]:
    d = {"id": b.id, "index": b.index, "bus_type": b.bus_type.value, "pd_mw": b.pd_mw,
         "qd_mvar": b.qd_mvar, "gs_mw": b.gs_mw, "bs_mvar": b.bs_mvar,
         "vmin_pu": b.vmin_pu, "vmax_pu": b.vmax_pu, "base_kv": b.base_kv}
    if b.vm_pu is not None:
        d["vm_pu"] = b.vm_pu
    if b.va_deg is not None:
        d["va_deg"] = b.va_deg
    return d


def network_to_dict(net: PowerSystem) -> dict[str, Any]:
    return {
        "case_name": net.case_name,
        "base_mva": net.base_mva,
        "buses": [bus_to_dict(b) for b in net.buses],
        "generators": [{
            "bus_id": g.bus_id, "pg_mw": g.pg_mw, "qg_mvar": g.qg_mvar,
            "qmax_mvar": g.qmax_mvar, "qmin_mvar": g.qmin_mvar, "vg_pu": g.vg_pu,
            "mbase_mva": g.mbase_mva, "pmax_mw": g.pmax_mw, "pmin_mw": g.pmin_mw,
            "in_service": g.in_service,
        } for g in net.generators],
        "branches": [{
            "from_bus": br.from_bus, "to_bus": br.to_bus, "r_pu": br.r_pu, "x_pu": br.x_pu,
            "b_pu": br.b_pu, "rating_mva": br.rating_mva, "tap_ratio": br.tap_ratio,
            "shift_deg": br.shift_deg, "kind": br.kind.value, "in_service": br.in_service,
        } for br in net.branches],
        "cost_models": [{"c2": c.c2, "c1": c.c1, "c0": c.c0, "kind": c.kind}
                        for c in net.cost_models],
    }


def network_from_dict(d: dict[str, Any]) -> PowerSystem:
    buses = tuple(Bus(id=int(b["id"]), index=int(b["index"]), bus_type=BusType(b["bus_type"]),
                      pd_mw=b["pd_mw"], qd_mvar=b["qd_mvar"], gs_mw=b["gs_mw"],
                      bs_mvar=b["bs_mvar"], vmin_pu=b["vmin_pu"], vmax_pu=b["vmax_pu"],
                      base_kv=b.get("base_kv", 0.0), vm_pu=b.get("vm_pu"), va_deg=b.get("va_deg"))
                  for b in d["buses"])
    gens = tuple(Generator(bus_id=int(g["bus_id"]), pg_mw=g["pg_mw"], qg_mvar=g["qg_mvar"],
                           qmax_mvar=g["qmax_mvar"], qmin_mvar=g["qmin_mvar"], vg_pu=g["vg_pu"],
                           mbase_mva=g["mbase_mva"], pmax_mw=g["pmax_mw"], pmin_mw=g["pmin_mw"],
                           in_service=bool(g["in_service"]))
                 for g in d["generators"])
    branches = tuple(Branch(from_bus=int(b["from_bus"]), to_bus=int(b["to_bus"]), r_pu=b["r_pu"],
                            x_pu=b["x_pu"], b_pu=b["b_pu"], rating_mva=b["rating_mva"],
                            tap_ratio=b["tap_ratio"], shift_deg=b["shift_deg"],
                            kind=BranchKind(b["kind"]), in_service=bool(b["in_service"]))
                     for b in d["branches"])
    costs = tuple(CostModel(c2=c["c2"], c1=c["c1"], c0=c["c0"], kind=c.get("kind", "polynomial"))
                  for c in d["cost_models"])
    return PowerSystem(case_name=d["case_name"], base_mva=d["base_mva"], buses=buses,
                       generators=gens, branches=branches, cost_models=costs)


def modification_to_dict(mod: Modification) -> dict[str, Any]:
    return {"kind": mod.kind.value, "target": mod.target, "payload": dict(mod.payload),
            "timestamp": mod.timestamp, "note": mod.note}


def modification_from_dict(d: dict[str, Any]) -> Modification:
    return Modification(kind=ModKind(d["kind"]), target=int(d["target"]),
                        payload={k: float(v) for k, v in d.get("payload", {}).items()},
                        timestamp=float(d.get("timestamp", 0.0)), note=d.get("note", ""))
