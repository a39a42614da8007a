"""Power flow: Ybus stamping, Newton solver, flows, balance gate."""

import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from gridbench import caseio, powerflow
from gridbench.network import (
    Branch,
    Bus,
    BusType,
    CostModel,
    Generator,
    Modification,
    ModKind,
    PowerSystem,
    apply_modification,
)
from gridbench.powerflow import (
    DivergedError,
    IslandWithoutSlackError,
    ValidationThresholds,
    build_ybus,
    check_balance,
    compute_flows,
    solve_powerflow,
)


def two_bus(load_mw=100.0, x=0.1, r=0.0) -> PowerSystem:
    return PowerSystem(
        "twobus", 100.0,
        buses=(Bus(id=1, index=0, bus_type=BusType.SLACK, base_kv=138),
               Bus(id=2, index=1, bus_type=BusType.PQ, pd_mw=load_mw, base_kv=138)),
        generators=(Generator(bus_id=1, vg_pu=1.0, pmax_mw=10 * load_mw,
                              qmax_mvar=10 * load_mw, qmin_mvar=-10 * load_mw),),
        branches=(Branch(from_bus=1, to_bus=2, r_pu=r, x_pu=x),),
        cost_models=(CostModel(c2=0.01, c1=20.0),))


class TestYbus:
    def test_single_line_stamp(self):
        net = two_bus(x=0.1, r=0.0)
        y = build_ybus(net).ybus.toarray()
        assert y[0, 1] == pytest.approx(0 + 10j)
        assert y[0, 0] == pytest.approx(0 - 10j)

    def test_case14_near_diagonal_dominance(self, case14):
        # strict dominance holds for the conductance part; magnitudes come
        # within the line-charging margin on every row
        y = build_ybus(case14).ybus.toarray()
        g = y.real
        n = y.shape[0]
        for i in range(n):
            off_g = sum(abs(g[i, j]) for j in range(n) if j != i)
            assert g[i, i] >= off_g - 1e-9
            off = sum(abs(y[i, j]) for j in range(n) if j != i)
            assert abs(y[i, i]) >= 0.95 * off

    def test_outage_equals_rebuild(self, case14):
        outaged = apply_modification(case14, Modification(ModKind.BRANCH_OUTAGE, 0))
        y1 = build_ybus(outaged).ybus.toarray()
        deleted = replace(case14, branches=tuple(case14.branches[1:]))
        y2 = build_ybus(deleted).ybus.toarray()
        assert np.abs(y1 - y2).max() < 1e-14

    def test_matches_loop_oracle(self, case57):
        fast = build_ybus(case57).ybus.toarray()
        slow = oracles.dense_ybus(case57)
        assert np.abs(fast - slow).max() < 1e-12

    def test_isolated_bus_row_keeps_only_shunt(self, case14):
        branches = tuple(b if 14 not in (b.from_bus, b.to_bus)
                         else replace(b, in_service=False) for b in case14.branches)
        net = replace(case14, branches=branches)
        y = build_ybus(net).ybus.toarray()
        i = net.bus_index(14)
        row = y[i].copy()
        row[i] = 0
        assert np.abs(row).max() == 0
        assert y[i, i] == pytest.approx(0)  # bus 14 carries no shunt


class TestNewton:
    def test_two_bus_losses_positive(self):
        net = two_bus(load_mw=100.0, x=0.1, r=0.01)
        sol = solve_powerflow(net)
        assert sol.converged
        assert sol.slack_p_mw > 100.0
        # independent oracle: scalar fixed-point on the one-unknown problem
        # (V2 = V1 + conj(S2) / (y * conj(V2)) with S2 = -1.0 p.u.)
        v2 = 1.0 + 0j
        y = 1 / complex(0.01, 0.1)
        for _ in range(500):
            v2 = 1.0 - 1.0 / (y * np.conj(v2))
        expected_v2 = abs(v2)
        assert sol.vm_pu[1] == pytest.approx(expected_v2, abs=1e-8)

    def test_zero_injection_flat(self, case30):
        # tap-free case: the flat state is exactly no-flow
        net = replace(case30,
                      buses=tuple(replace(b, pd_mw=0.0, qd_mvar=0.0, gs_mw=0.0,
                                          bs_mvar=0.0, vm_pu=1.0, va_deg=0.0)
                                  for b in case30.buses),
                      generators=tuple(replace(g, pg_mw=0.0, qg_mvar=0.0, vg_pu=1.0)
                                       for g in case30.generators),
                      branches=tuple(replace(br, b_pu=0.0) for br in case30.branches))
        sol = solve_powerflow(net)
        assert sol.converged
        assert sol.iterations <= 2
        assert abs(sol.losses_mw) < 1e-6
        assert all(abs(f.p_from_mw) < 1e-6 for f in sol.branch_flows)

    def test_case14_flat_start(self, case14, case14_pf):
        sol = case14_pf
        assert sol.converged
        assert sol.iterations <= 10
        assert sol.max_mismatch_pu < 1e-8

    def test_case14_gauss_seidel_agreement(self, case14):
        t0 = time.time()
        sol = solve_powerflow(case14, enforce_q_limits=False)
        assert time.time() - t0 < 1.0
        vm_gs, va_gs, _, conv = oracles.gauss_seidel(case14)
        assert conv
        assert np.abs(np.array(sol.vm_pu) - vm_gs).max() < 1e-6

    def test_case30_gauss_seidel_agreement(self, case30):
        sol = solve_powerflow(case30, enforce_q_limits=False)
        vm_gs, _, _, conv = oracles.gauss_seidel(case30)
        assert conv
        assert np.abs(np.array(sol.vm_pu) - vm_gs).max() < 1e-6

    def test_warm_start_converges_fast(self, case118):
        cold = solve_powerflow(case118, enforce_q_limits=False)
        warm = solve_powerflow(case118, start=cold, enforce_q_limits=False)
        assert warm.converged
        assert warm.iterations <= 2

    def test_outage_equals_deletion(self, case30):
        outaged = apply_modification(case30, Modification(ModKind.BRANCH_OUTAGE, 7))
        deleted = replace(case30, branches=tuple(b for i, b in enumerate(case30.branches)
                                                 if i != 7))
        s1 = solve_powerflow(outaged, enforce_q_limits=False)
        s2 = solve_powerflow(deleted, enforce_q_limits=False)
        assert np.abs(np.array(s1.vm_pu) - np.array(s2.vm_pu)).max() < 1e-10

    def test_divergence_raises(self):
        net = two_bus(load_mw=5000.0, x=0.5)   # far beyond transferable power
        with pytest.raises(DivergedError):
            solve_powerflow(net)

    def test_island_without_slack(self, case14):
        buses = list(case14.buses)
        slack = next(i for i, b in enumerate(buses) if b.bus_type is BusType.SLACK)
        buses[slack] = replace(buses[slack], bus_type=BusType.PQ)
        with pytest.raises(IslandWithoutSlackError):
            solve_powerflow(replace(case14, buses=tuple(buses)))

    def test_jacobian_matches_finite_differences(self, case14):
        rng = np.random.default_rng(11)
        adm = build_ybus(case14)
        sbus, types, vset, _ = powerflow._bus_setup(case14)
        n = case14.n_bus
        vm = rng.uniform(0.98, 1.04, n)
        va = rng.uniform(-0.2, 0.2, n)
        pv = [i for i in range(n) if types[i] is BusType.PV]
        pq = [i for i in range(n) if types[i] is BusType.PQ]
        pvpq = pv + pq

        import scipy.sparse as sp
        v = vm * np.exp(1j * va)
        ibus = adm.ybus @ v
        ds_dva = 1j * sp.diags(v) @ (sp.diags(ibus) - adm.ybus @ sp.diags(v)).conj()
        ds_dvm = sp.diags(v) @ (adm.ybus @ sp.diags(v / vm)).conj() \
            + sp.diags(ibus).conj() @ sp.diags(v / vm)
        jac = np.block([
            [ds_dva.toarray().real[np.ix_(pvpq, pvpq)], ds_dvm.toarray().real[np.ix_(pvpq, pq)]],
            [ds_dva.toarray().imag[np.ix_(pq, pvpq)], ds_dvm.toarray().imag[np.ix_(pq, pq)]]])

        def mismatch(vm_, va_):
            v_ = vm_ * np.exp(1j * va_)
            ds = v_ * np.conj(adm.ybus @ v_) - sbus
            return np.concatenate([ds[pvpq].real, ds[pq].imag])

        eps = 1e-6
        cols = []
        for k in pvpq:
            va_p, va_m = va.copy(), va.copy()
            va_p[k] += eps
            va_m[k] -= eps
            cols.append((mismatch(vm, va_p) - mismatch(vm, va_m)) / (2 * eps))
        for k in pq:
            vm_p, vm_m = vm.copy(), vm.copy()
            vm_p[k] += eps
            vm_m[k] -= eps
            cols.append((mismatch(vm_p, va) - mismatch(vm_m, va)) / (2 * eps))
        jac_fd = np.array(cols).T
        denom = max(1.0, np.abs(jac_fd).max())
        assert np.abs(jac - jac_fd).max() / denom < 1e-6


class TestFlowsAndBalance:
    def test_zero_flow_zero_loading(self, case30):
        vm = np.ones(case30.n_bus)
        va = np.zeros(case30.n_bus)
        flows, losses, max_loading = compute_flows(case30, vm, va)
        # flat voltage leaves only charging currents; active flows are zero
        assert all(abs(f.p_from_mw) < 1e-9 for f in flows)

    def test_two_bus_sending_end(self):
        net = two_bus(load_mw=100.0, x=0.1, r=0.01)
        sol = solve_powerflow(net)
        bf = sol.branch_flows[0]
        assert bf.p_from_mw == pytest.approx(100.0 + sol.losses_mw, abs=1e-6)
        sf, st = oracles.branch_flow_by_loops(net, sol.vm_pu, sol.va_deg, 0)
        assert bf.p_from_mw == pytest.approx(sf.real, abs=1e-9)
        assert bf.p_to_mw == pytest.approx(st.real, abs=1e-9)

    def test_converged_state_passes_balance(self, case14, case14_pf):
        assert check_balance(case14, case14_pf).ok

    def test_perturbed_voltage_fails_near_bus(self, case14, case14_pf):
        sol = case14_pf.model_copy(deep=True)
        i = case14.bus_index(3)
        sol.vm_pu[i] += 0.05
        res = check_balance(case14, sol)
        assert not res.ok
        # worst mismatch at or adjacent to the perturbed bus
        neighbors = {3} | {br.to_bus for br in case14.branches if br.from_bus == 3} \
            | {br.from_bus for br in case14.branches if br.to_bus == 3}
        assert res.worst_bus_id in neighbors
        # brute-force recomputation agrees
        ds = oracles.mismatch_by_loops(case14, sol.vm_pu, sol.va_deg)
        for g_i, g in enumerate(case14.generators):
            bi = case14.bus_index(g.bus_id)
            ds[bi] += complex(g.pg_mw, g.qg_mvar) / 100.0
            ds[bi] -= complex(sol.gen_p_mw[g_i], sol.gen_q_mvar[g_i]) / 100.0
        assert res.worst_mismatch_pu == pytest.approx(np.abs(ds).max(), rel=1e-9)

    def test_empty_system_balance(self):
        net = PowerSystem(
            "null", 100.0,
            buses=(Bus(id=1, index=0, bus_type=BusType.SLACK),
                   Bus(id=2, index=1, bus_type=BusType.PQ)),
            generators=(Generator(bus_id=1, qmax_mvar=10, qmin_mvar=-10, pmax_mw=10),),
            branches=(Branch(from_bus=1, to_bus=2, r_pu=0.0, x_pu=0.1),),
            cost_models=(CostModel(),))
        sol = solve_powerflow(net)
        res = check_balance(net, sol)
        assert res.ok
        assert res.worst_mismatch_pu < 1e-12

    def test_solution_embeds_thresholds(self, case14):
        th = ValidationThresholds(nr_tol_pu=1e-9)
        sol = solve_powerflow(case14, thresholds=th)
        assert sol.thresholds.nr_tol_pu == 1e-9
