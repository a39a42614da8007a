"""AC power flow: Ybus construction, polar Newton-Raphson, flows and balance checks.

The converged balance mismatch recomputed here is the universal validation
gate every artifact must pass before agents may cite it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field
from scipy.sparse.linalg import splu

from .network import BusType, PowerSystem


class DivergedError(RuntimeError):
    def __init__(self, iterations: int, last_mismatch: float):
        self.iterations = iterations
        self.last_mismatch = last_mismatch
        super().__init__(f"power flow diverged after {iterations} iterations, "
                         f"last mismatch {last_mismatch:.3e} p.u.")


class IslandWithoutSlackError(RuntimeError):
    def __init__(self, component: Sequence[int]):
        self.component = list(component)
        super().__init__(f"component with buses {self.component[:8]}... has "
                         "generation but no slack bus")


class ValidationThresholds(BaseModel):
    """Numerical gates applied to every solver artifact."""

    balance_tol_pu: float = 1e-4      # hard gate on recomputed bus power mismatch
    nr_tol_pu: float = 1e-8           # Newton solver target
    v_sanity_low_pu: float = 0.5
    v_sanity_high_pu: float = 1.5
    thermal_warn_percent: float = 110.0
    thermal_severe_percent: float = 115.0
    v_low_pu: float = 0.94
    v_high_pu: float = 1.06
    max_iterations: int = 30

    model_config = {"frozen": True}


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Sparse bus admittance matrix plus per-branch stamps for flow recovery."""

    ybus: sp.csr_matrix
    yff: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray
    f_idx: np.ndarray            # dense from-bus index per branch
    t_idx: np.ndarray

    @property
    def dimension(self) -> int:
        return self.ybus.shape[0]


class BranchFlow(BaseModel):
    index: int
    from_bus: int
    to_bus: int
    p_from_mw: float
    q_from_mvar: float
    p_to_mw: float
    q_to_mvar: float
    loading_percent: float = 0.0
    in_service: bool = True


class PowerFlowSolution(BaseModel):
    converged: bool
    iterations: int
    max_mismatch_pu: float
    vm_pu: list[float]
    va_deg: list[float]
    gen_p_mw: list[float]
    gen_q_mvar: list[float]
    branch_flows: list[BranchFlow]
    losses_mw: float
    slack_p_mw: float
    min_voltage_pu: float
    max_voltage_pu: float
    max_loading_percent: float
    thresholds: ValidationThresholds = Field(default_factory=ValidationThresholds)


def build_ybus(net: PowerSystem) -> AdmittanceMatrix:
    """Pi-model stamping with tap ratio and phase shift; out-of-service branches
    contribute nothing."""
    n = net.n_bus
    nl = net.n_branch
    idx = {b.id: b.index for b in net.buses}

    yff = np.zeros(nl, dtype=complex)
    yft = np.zeros(nl, dtype=complex)
    ytf = np.zeros(nl, dtype=complex)
    ytt = np.zeros(nl, dtype=complex)
    f_idx = np.zeros(nl, dtype=int)
    t_idx = np.zeros(nl, dtype=int)

    for i, br in enumerate(net.branches):
        f_idx[i] = idx[br.from_bus]
        t_idx[i] = idx[br.to_bus]
        if not br.in_service:
            continue
        ys = 1.0 / complex(br.r_pu, br.x_pu)
        bc = 1j * br.b_pu / 2.0
        tap = br.tap_ratio * np.exp(1j * np.deg2rad(br.shift_deg))
        yff[i] = (ys + bc) / (tap * np.conj(tap))
        yft[i] = -ys / np.conj(tap)
        ytf[i] = -ys / tap
        ytt[i] = ys + bc

    ysh = np.array([(b.gs_mw + 1j * b.bs_mvar) / net.base_mva for b in net.buses])

    rows = np.concatenate([f_idx, f_idx, t_idx, t_idx, np.arange(n)])
    cols = np.concatenate([f_idx, t_idx, f_idx, t_idx, np.arange(n)])
    data = np.concatenate([yff, yft, ytf, ytt, ysh])
    ybus = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return AdmittanceMatrix(ybus=ybus, yff=yff, yft=yft, ytf=ytf, ytt=ytt,
                            f_idx=f_idx, t_idx=t_idx)


def _bus_setup(net: PowerSystem):
    """Scheduled injections and bus classification.

    PV buses without an in-service generator degrade to PQ.  Returns dense
    arrays in per-unit on the system base.
    """
    n = net.n_bus
    pd = np.array([b.pd_mw for b in net.buses]) / net.base_mva
    qd = np.array([b.qd_mvar for b in net.buses]) / net.base_mva

    pg = np.zeros(n)
    qg = np.zeros(n)
    has_gen = np.zeros(n, dtype=bool)
    vset = np.ones(n)
    for g in net.generators:
        if not g.in_service:
            continue
        i = net.bus_index(g.bus_id)
        pg[i] += g.pg_mw / net.base_mva
        qg[i] += g.qg_mvar / net.base_mva
        has_gen[i] = True
        vset[i] = g.vg_pu

    types = np.empty(n, dtype=object)
    for b in net.buses:
        t = b.bus_type
        if t is BusType.PV and not has_gen[b.index]:
            t = BusType.PQ
        types[b.index] = t

    sbus = (pg - pd) + 1j * (qg - qd)
    return sbus, types, vset, has_gen


def _check_slack_reachability(net: PowerSystem, types) -> None:
    from .network import connected_components
    comps = connected_components(net)
    gen_buses = {net.bus_index(g.bus_id) for g in net.generators if g.in_service}
    for comp in comps:
        has_slack = any(types[i] is BusType.SLACK for i in comp)
        if not has_slack and gen_buses & set(comp):
            raise IslandWithoutSlackError(comp)


def solve_powerflow(net: PowerSystem,
                    start: Union[str, PowerFlowSolution] = "flat",
                    thresholds: Optional[ValidationThresholds] = None,
                    enforce_q_limits: bool = True) -> PowerFlowSolution:
    """Newton-Raphson in polar coordinates with PV/PQ switching on Q limits.

    ``start`` is "flat" (V=1, angles 0, PV magnitudes from setpoints) or a
    previous solution used as a warm start.  Divergence raises
    :class:`DivergedError`; a generator-bearing island without a slack raises
    :class:`IslandWithoutSlackError`.
    """
    th = thresholds or ValidationThresholds()
    adm = build_ybus(net)
    ybus = adm.ybus
    n = net.n_bus
    sbus, types, vset, has_gen = _bus_setup(net)
    _check_slack_reachability(net, types)

    # initial state
    if isinstance(start, PowerFlowSolution):
        vm = np.array(start.vm_pu, dtype=float)
        va = np.deg2rad(np.array(start.va_deg, dtype=float))
    else:
        vm = np.ones(n)
        va = np.zeros(n)
    gen_mask = np.array([types[i] in (BusType.PV, BusType.SLACK) and has_gen[i]
                         for i in range(n)])
    vm[gen_mask] = vset[gen_mask]

    cur_types = types.copy()
    qmin_bus, qmax_bus = _bus_q_limits(net)
    pd = np.array([b.pd_mw for b in net.buses]) / net.base_mva
    qd = np.array([b.qd_mvar for b in net.buses]) / net.base_mva

    iterations = 0
    switch_rounds = 0
    while True:
        vm, va, iters = _newton(ybus, sbus, cur_types, vm, va, th)
        iterations += iters
        if not enforce_q_limits:
            break
        switched = _apply_q_limits(ybus, sbus, cur_types, qd, vm, va,
                                   qmin_bus, qmax_bus, has_gen)
        if not switched:
            break
        switch_rounds += 1
        if switch_rounds > 12:
            break
        # sbus mutated in place with clamped Q; loop resolves from warm state

    v = vm * np.exp(1j * va)
    s_calc = v * np.conj(ybus @ v)
    gen_p, gen_q = _allocate_generation(net, s_calc, pd, qd)

    mism = _mismatch_vector(ybus, sbus, cur_types, vm, va)
    max_mismatch = float(np.max(np.abs(mism))) if mism.size else 0.0

    flows, losses, max_loading = compute_flows(net, vm, va, adm)

    slack_p = 0.0
    for g_i, g in enumerate(net.generators):
        if g.in_service and net.buses[net.bus_index(g.bus_id)].bus_type is BusType.SLACK:
            slack_p += gen_p[g_i]

    return PowerFlowSolution(
        converged=True,
        iterations=iterations,
        max_mismatch_pu=max_mismatch,
        vm_pu=[float(x) for x in vm],
        va_deg=[float(x) for x in np.rad2deg(va)],
        gen_p_mw=[float(x) for x in gen_p],
        gen_q_mvar=[float(x) for x in gen_q],
        branch_flows=flows,
        losses_mw=losses,
        slack_p_mw=slack_p,
        min_voltage_pu=float(vm.min()),
        max_voltage_pu=float(vm.max()),
        max_loading_percent=max_loading,
        thresholds=th,
    )


def _bus_q_limits(net: PowerSystem):
    n = net.n_bus
    qmin = np.zeros(n)
    qmax = np.zeros(n)
    for g in net.generators:
        if not g.in_service:
            continue
        i = net.bus_index(g.bus_id)
        qmin[i] += g.qmin_mvar / net.base_mva
        qmax[i] += g.qmax_mvar / net.base_mva
    return qmin, qmax


def _mismatch_vector(ybus, sbus, types, vm, va):
    v = vm * np.exp(1j * va)
    ds = v * np.conj(ybus @ v) - sbus
    pv = [i for i in range(len(vm)) if types[i] is BusType.PV]
    pq = [i for i in range(len(vm)) if types[i] is BusType.PQ]
    return np.concatenate([ds[pv + pq].real, ds[pq].imag])


def _newton(ybus, sbus, types, vm, va, th: ValidationThresholds):
    """Core NR loop; mutates nothing, returns (vm, va, iterations)."""
    vm = vm.copy()
    va = va.copy()
    n = len(vm)
    pv = np.array([i for i in range(n) if types[i] is BusType.PV], dtype=int)
    pq = np.array([i for i in range(n) if types[i] is BusType.PQ], dtype=int)
    pvpq = np.concatenate([pv, pq])

    if pvpq.size == 0:
        return vm, va, 0

    growth = 0
    prev_norm = np.inf
    for it in range(th.max_iterations + 1):
        v = vm * np.exp(1j * va)
        ibus = ybus @ v
        ds = v * np.conj(ibus) - sbus
        f = np.concatenate([ds[pvpq].real, ds[pq].imag])
        norm = np.max(np.abs(f)) if f.size else 0.0
        if norm < th.nr_tol_pu:
            return vm, va, it
        if it >= th.max_iterations:
            raise DivergedError(it, norm)
        if norm > prev_norm:
            growth += 1
            if growth >= 5:
                raise DivergedError(it, norm)
        else:
            growth = 0
        prev_norm = norm

        diag_v = sp.diags(v)
        diag_i = sp.diags(ibus)
        diag_vnorm = sp.diags(v / vm)
        ds_dva = 1j * diag_v @ (diag_i - ybus @ diag_v).conj()
        ds_dvm = diag_v @ (ybus @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm

        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = sp.vstack([sp.hstack([j11, j12]), sp.hstack([j21, j22])], format="csc")

        dx = splu(jac).solve(-f)
        va[pvpq] += dx[:pvpq.size]
        vm[pq] += dx[pvpq.size:]

    raise DivergedError(th.max_iterations, prev_norm)


def _apply_q_limits(ybus, sbus, cur_types, qd, vm, va,
                    qmin_bus, qmax_bus, has_gen) -> bool:
    """Switch PV buses violating aggregate Q limits to PQ at the violated limit.

    Mutates ``cur_types`` and ``sbus``; returns True when a switch happened.
    Generator reactive output at a PV bus is the calculated injection plus the
    local load, since the load is folded into the scheduled injection.
    """
    v = vm * np.exp(1j * va)
    s_calc = v * np.conj(ybus @ v)
    switched = False
    for i in range(len(vm)):
        if cur_types[i] is not BusType.PV or not has_gen[i]:
            continue
        q_gen = s_calc[i].imag + qd[i]
        if q_gen > qmax_bus[i] + 1e-9:
            cur_types[i] = BusType.PQ
            sbus[i] = sbus[i].real + 1j * (qmax_bus[i] - qd[i])
            switched = True
        elif q_gen < qmin_bus[i] - 1e-9:
            cur_types[i] = BusType.PQ
            sbus[i] = sbus[i].real + 1j * (qmin_bus[i] - qd[i])
            switched = True
    return switched


def _allocate_generation(net: PowerSystem, s_calc, pd, qd):
    """Per-generator P and Q in MW/MVAr consistent with the solved state."""
    base = net.base_mva
    gen_p = np.zeros(net.n_gen)
    gen_q = np.zeros(net.n_gen)

    by_bus: dict[int, list[int]] = {}
    for g_i, g in enumerate(net.generators):
        if g.in_service:
            by_bus.setdefault(net.bus_index(g.bus_id), []).append(g_i)

    for i, gens in by_bus.items():
        p_bus = (s_calc[i].real + pd[i]) * base
        q_bus = (s_calc[i].imag + qd[i]) * base
        # P: the slack bus absorbs the imbalance, others keep scheduled values
        if net.buses[i].bus_type is BusType.SLACK:
            sched = sum(net.generators[g].pg_mw for g in gens)
            extra = p_bus - sched
            for g_i in gens:
                gen_p[g_i] = net.generators[g_i].pg_mw + extra / len(gens)
        else:
            for g_i in gens:
                gen_p[g_i] = net.generators[g_i].pg_mw
        # Q: distributed proportionally to each unit's reactive range
        ranges = [max(net.generators[g].qmax_mvar - net.generators[g].qmin_mvar, 0.0)
                  for g in gens]
        total_range = sum(ranges)
        if total_range > 0:
            q_above = q_bus - sum(net.generators[g].qmin_mvar for g in gens)
            for g_i, rng in zip(gens, ranges):
                gen_q[g_i] = net.generators[g_i].qmin_mvar + q_above * rng / total_range
        else:
            for g_i in gens:
                gen_q[g_i] = q_bus / len(gens)
    return gen_p, gen_q


def compute_flows(net: PowerSystem, vm: np.ndarray, va: np.ndarray,
                  adm: Optional[AdmittanceMatrix] = None):
    """Branch flows (MW/MVAr), total losses, and the worst rated loading.

    Loading percent is apparent power at the more loaded end over the MVA
    rating; unrated branches (rating 0) report 0 and are excluded.
    """
    if adm is None:
        adm = build_ybus(net)
    v = vm * np.exp(1j * va)
    base = net.base_mva

    flows: list[BranchFlow] = []
    losses = 0.0
    max_loading = 0.0
    for i, br in enumerate(net.branches):
        if not br.in_service:
            flows.append(BranchFlow(index=i, from_bus=br.from_bus, to_bus=br.to_bus,
                                    p_from_mw=0.0, q_from_mvar=0.0, p_to_mw=0.0,
                                    q_to_mvar=0.0, loading_percent=0.0, in_service=False))
            continue
        vf, vt = v[adm.f_idx[i]], v[adm.t_idx[i]]
        sf = vf * np.conj(adm.yff[i] * vf + adm.yft[i] * vt) * base
        st = vt * np.conj(adm.ytf[i] * vf + adm.ytt[i] * vt) * base
        loading = 0.0
        if br.rating_mva > 0:
            loading = max(abs(sf), abs(st)) / br.rating_mva * 100.0
            max_loading = max(max_loading, loading)
        losses += sf.real + st.real
        flows.append(BranchFlow(index=i, from_bus=br.from_bus, to_bus=br.to_bus,
                                p_from_mw=float(sf.real), q_from_mvar=float(sf.imag),
                                p_to_mw=float(st.real), q_to_mvar=float(st.imag),
                                loading_percent=float(loading)))
    return flows, float(losses), float(max_loading)


class BalanceCheck(BaseModel):
    ok: bool
    worst_bus_id: int
    worst_mismatch_pu: float


def check_balance(net: PowerSystem, solution: PowerFlowSolution,
                  thresholds: Optional[ValidationThresholds] = None) -> BalanceCheck:
    """Recompute injected minus scheduled power per bus from the raw state.

    Scheduled means solved generator outputs minus loads; the check therefore
    validates the voltages and the reported dispatch together.
    """
    th = thresholds or solution.thresholds
    adm = build_ybus(net)
    vm = np.array(solution.vm_pu)
    va = np.deg2rad(np.array(solution.va_deg))
    v = vm * np.exp(1j * va)
    s_calc = v * np.conj(adm.ybus @ v) * net.base_mva

    n = net.n_bus
    p_sched = np.array([-b.pd_mw for b in net.buses], dtype=float)
    q_sched = np.array([-b.qd_mvar for b in net.buses], dtype=float)
    for g_i, g in enumerate(net.generators):
        if not g.in_service:
            continue
        i = net.bus_index(g.bus_id)
        p_sched[i] += solution.gen_p_mw[g_i]
        q_sched[i] += solution.gen_q_mvar[g_i]

    mism = np.abs((s_calc.real - p_sched) + 1j * (s_calc.imag - q_sched)) / net.base_mva
    worst = int(np.argmax(mism)) if n else 0
    return BalanceCheck(ok=bool(mism.max() < th.balance_tol_pu) if n else True,
                        worst_bus_id=net.buses[worst].id if n else 0,
                        worst_mismatch_pu=float(mism.max()) if n else 0.0)
