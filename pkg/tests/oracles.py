"""Independent test oracles.

Deliberately naive implementations kept free of the production solver code
paths: a Gauss-Seidel power flow and loop-based mismatch/flow recomputation.
They exist to cross-check the Newton solver, never to be fast.
"""

from __future__ import annotations

import cmath

import numpy as np

from gridbench.network import BusType, PowerSystem


def dense_ybus(net: PowerSystem) -> np.ndarray:
    """Dense admittance matrix built bus-by-bus with explicit loops."""
    n = net.n_bus
    idx = {b.id: b.index for b in net.buses}
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r_pu, br.x_pu)
        bc = 1j * br.b_pu / 2.0
        tap = br.tap_ratio * cmath.exp(1j * np.deg2rad(br.shift_deg))
        y[f, f] += (ys + bc) / (tap * tap.conjugate())
        y[f, t] += -ys / tap.conjugate()
        y[t, f] += -ys / tap
        y[t, t] += ys + bc
    for b in net.buses:
        y[b.index, b.index] += complex(b.gs_mw, b.bs_mvar) / net.base_mva
    return y


def scheduled_injections(net: PowerSystem):
    """Net scheduled complex injection per bus in p.u.; PV magnitudes and types."""
    n = net.n_bus
    s = np.zeros(n, dtype=complex)
    vset = np.ones(n)
    has_gen = [False] * n
    for b in net.buses:
        s[b.index] -= complex(b.pd_mw, b.qd_mvar) / net.base_mva
    for g in net.generators:
        if not g.in_service:
            continue
        i = net.bus_index(g.bus_id)
        s[i] += complex(g.pg_mw, g.qg_mvar) / net.base_mva
        vset[i] = g.vg_pu
        has_gen[i] = True
    types = []
    for b in net.buses:
        t = b.bus_type
        if t is BusType.PV and not has_gen[b.index]:
            t = BusType.PQ
        types.append(t)
    return s, types, vset


def gauss_seidel(net: PowerSystem, tol: float = 1e-10, max_iter: int = 20000,
                 accel: float = 1.6):
    """Gauss-Seidel power flow with successive over-relaxation.

    Returns (vm, va_deg, iterations, converged).  No Q-limit handling: the
    oracle solves the plain PV/PQ problem.
    """
    y = dense_ybus(net)
    s, types, vset = scheduled_injections(net)
    n = net.n_bus

    v = np.ones(n, dtype=complex)
    for i in range(n):
        if types[i] in (BusType.PV, BusType.SLACK):
            v[i] = vset[i]

    pq = [i for i in range(n) if types[i] is BusType.PQ]
    pv = [i for i in range(n) if types[i] is BusType.PV]

    it = 0
    for it in range(1, max_iter + 1):
        for i in pq:
            vnew = (np.conj(s[i] / v[i]) - (y[i] @ v - y[i, i] * v[i])) / y[i, i]
            v[i] += accel * (vnew - v[i])
        for i in pv:
            q = (v[i] * np.conj(y[i] @ v)).imag
            s[i] = s[i].real + 1j * q
            vnew = (np.conj(s[i] / v[i]) - (y[i] @ v - y[i, i] * v[i])) / y[i, i]
            vnew = v[i] + accel * (vnew - v[i])
            v[i] = vset[i] * vnew / abs(vnew)
        ds = v * np.conj(y @ v) - s
        err = max(
            max((abs(ds[i].real) for i in pq + pv), default=0.0),
            max((abs(ds[i].imag) for i in pq), default=0.0),
        )
        if err < tol:
            return np.abs(v), np.rad2deg(np.angle(v)), it, True
    return np.abs(v), np.rad2deg(np.angle(v)), it, False


def mismatch_by_loops(net: PowerSystem, vm, va_deg):
    """Per-bus injected-minus-scheduled power, recomputed element by element."""
    y = dense_ybus(net)
    v = np.array(vm) * np.exp(1j * np.deg2rad(np.array(va_deg)))
    s_calc = v * np.conj(y @ v)
    s_sched, _, _ = scheduled_injections(net)
    return s_calc - s_sched


def branch_flow_by_loops(net: PowerSystem, vm, va_deg, index: int):
    """(S_from, S_to) in MVA for one branch, from first principles."""
    br = net.branches[index]
    if not br.in_service:
        return 0j, 0j
    idx = {b.id: b.index for b in net.buses}
    v = np.array(vm) * np.exp(1j * np.deg2rad(np.array(va_deg)))
    vf, vt = v[idx[br.from_bus]], v[idx[br.to_bus]]
    ys = 1.0 / complex(br.r_pu, br.x_pu)
    bc = 1j * br.b_pu / 2.0
    tap = br.tap_ratio * cmath.exp(1j * np.deg2rad(br.shift_deg))
    i_f = ((ys + bc) / (tap * tap.conjugate())) * vf + (-ys / tap.conjugate()) * vt
    i_t = (-ys / tap) * vf + (ys + bc) * vt
    return vf * np.conj(i_f) * net.base_mva, vt * np.conj(i_t) * net.base_mva
