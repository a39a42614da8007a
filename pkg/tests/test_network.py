"""Network model: validation, modifications, topology."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbench import caseio
from gridbench.network import (
    AlreadyInServiceError,
    AlreadyOutOfServiceError,
    BusType,
    Modification,
    ModKind,
    PowerSystem,
    UnknownTargetError,
    apply_modification,
    connected_components,
    inverse_modification,
    replay,
    validate_network,
)


class TestValidation:
    def test_builtin_case14_is_clean(self, case14):
        assert validate_network(case14).ok

    def test_zero_reactance_flagged(self, case14):
        branches = list(case14.branches)
        branches[0] = replace(branches[0], x_pu=0.0)
        bad = replace_branches(case14, branches)
        report = validate_network(bad)
        assert not report.ok
        assert any("zero series reactance, branch 0" in m for m in report.messages())

    def test_slack_retyped_pq_flagged(self, case14):
        buses = list(case14.buses)
        slack = next(i for i, b in enumerate(buses) if b.bus_type is BusType.SLACK)
        buses[slack] = replace(buses[slack], bus_type=BusType.PQ)
        bad = replace(case14, buses=tuple(buses))
        report = validate_network(bad)
        assert any("no slack in component 0" in m for m in report.messages())

    def test_dangling_generator_flagged(self, case14):
        gens = list(case14.generators)
        gens[0] = replace(gens[0], bus_id=999)
        bad = replace(case14, generators=tuple(gens))
        assert any("missing bus 999" in m for m in validate_network(bad).messages())

    def test_voltage_band_flagged(self, case14):
        buses = list(case14.buses)
        buses[3] = replace(buses[3], vmin_pu=1.1, vmax_pu=0.9)
        report = validate_network(replace(case14, buses=tuple(buses)))
        assert any("voltage band" in m for m in report.messages())


def replace_branches(net: PowerSystem, branches) -> PowerSystem:
    return replace(net, branches=tuple(branches))


class TestModifications:
    def test_set_bus_load_case118(self, case118):
        mod = Modification(ModKind.SET_BUS_LOAD, 10, {"p_mw": 50.0})
        out = apply_modification(case118, mod)
        assert out.buses[out.bus_index(10)].pd_mw == 50.0
        # input unchanged (pure transformation)
        assert case118.buses[case118.bus_index(10)].pd_mw == 0.0

    def test_scale_by_one_is_identity(self, case14):
        mod = Modification(ModKind.SCALE_BUS_LOAD, 2, {"factor": 1.0})
        out = apply_modification(case14, mod)
        assert out == case14

    def test_outage_then_restore_roundtrips(self, case14):
        out = apply_modification(case14, Modification(ModKind.BRANCH_OUTAGE, 0))
        back = apply_modification(out, Modification(ModKind.BRANCH_RESTORE, 0))
        assert back == case14

    def test_unknown_targets(self, case14):
        with pytest.raises(UnknownTargetError):
            apply_modification(case14, Modification(ModKind.SET_BUS_LOAD, 999, {"p_mw": 1}))
        with pytest.raises(UnknownTargetError):
            apply_modification(case14, Modification(ModKind.BRANCH_OUTAGE, 99))

    def test_double_outage_rejected(self, case14):
        out = apply_modification(case14, Modification(ModKind.BRANCH_OUTAGE, 3))
        with pytest.raises(AlreadyOutOfServiceError):
            apply_modification(out, Modification(ModKind.BRANCH_OUTAGE, 3))
        with pytest.raises(AlreadyInServiceError):
            apply_modification(case14, Modification(ModKind.BRANCH_RESTORE, 3))

    def test_purity_repeated_application(self, case14):
        mod = Modification(ModKind.SET_BUS_LOAD, 3, {"p_mw": 70.0, "q_mvar": 20.0})
        assert apply_modification(case14, mod) == apply_modification(case14, mod)

    def test_set_gen_limit(self, case14):
        mod = Modification(ModKind.SET_GEN_LIMIT, 1, {"pmax_mw": 120.0})
        out = apply_modification(case14, mod)
        assert out.generators[1].pmax_mw == 120.0

    @given(bus_pos=st.integers(min_value=0, max_value=13),
           p=st.floats(min_value=0, max_value=500, allow_nan=False),
           factor=st.floats(min_value=0.1, max_value=5.0, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_every_modification_has_inverse(self, bus_pos, p, factor):
        net = caseio.load_builtin("case14")
        bus_id = net.buses[bus_pos].id
        for mod in (Modification(ModKind.SET_BUS_LOAD, bus_id, {"p_mw": p, "q_mvar": p / 3}),
                    Modification(ModKind.SCALE_BUS_LOAD, bus_id, {"factor": factor})):
            inv = inverse_modification(net, mod)
            forward = apply_modification(net, mod)
            assert apply_modification(forward, inv) == net or \
                _loads_close(apply_modification(forward, inv), net)

    def test_diff_log_replay_reconstructs(self, case14):
        mods = [Modification(ModKind.SET_BUS_LOAD, 3, {"p_mw": 80.0}),
                Modification(ModKind.BRANCH_OUTAGE, 5),
                Modification(ModKind.SCALE_BUS_LOAD, 9, {"factor": 1.5}),
                Modification(ModKind.BRANCH_RESTORE, 5)]
        current = case14
        for m in mods:
            current = apply_modification(current, m)
        assert replay(case14, mods) == current


def _loads_close(a: PowerSystem, b: PowerSystem) -> bool:
    # scale inverse multiplies by 1/factor: equality up to float round-trip
    return all(abs(x.pd_mw - y.pd_mw) < 1e-9 and abs(x.qd_mvar - y.qd_mvar) < 1e-9
               for x, y in zip(a.buses, b.buses))


class TestComponents:
    def test_intact_case14_single_component(self, case14):
        comps = connected_components(case14)
        assert len(comps) == 1
        assert len(comps[0]) == 14

    def test_leaf_outage_makes_singleton(self, case118):
        # bus 117 hangs on the single branch 12-117: identified by degree count
        degree = {}
        for br in case118.branches:
            degree[br.from_bus] = degree.get(br.from_bus, 0) + 1
            degree[br.to_bus] = degree.get(br.to_bus, 0) + 1
        assert degree[117] == 1
        idx = next(i for i, br in enumerate(case118.branches)
                   if 117 in (br.from_bus, br.to_bus))
        out = apply_modification(case118, Modification(ModKind.BRANCH_OUTAGE, idx))
        comps = connected_components(out)
        assert len(comps) == 2
        singleton = min(comps, key=len)
        assert singleton == [case118.bus_index(117)]

    def test_no_branches_all_singletons(self, case14):
        empty = replace(case14, branches=())
        comps = connected_components(empty)
        assert len(comps) == 14
        assert all(len(c) == 1 for c in comps)

    def test_out_of_service_branches_do_not_conduct(self, case14):
        branches = tuple(replace(b, in_service=False) for b in case14.branches)
        comps = connected_components(replace(case14, branches=branches))
        assert len(comps) == 14
