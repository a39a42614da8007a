"""Tool registry: schemas, gates, recovery ladder, atomic context commits."""

import pytest

from gridbench import powerflow
from gridbench.session import AgentContext
from gridbench.tools import (
    ArgsInvalidError,
    Attempt,
    DuplicateNameError,
    Execution,
    GateOutcome,
    ParamSpec,
    RecoveryAction,
    ToolRegistry,
    ToolSpec,
    UnknownToolError,
    build_default_registry,
    register_tool,
    validate_result,
)


@pytest.fixture(scope="module")
def registry():
    return build_default_registry()


@pytest.fixture()
def ctx():
    return AgentContext.from_case("case14")


class TestRegistry:
    def test_seven_domain_tools_registered(self, registry):
        assert set(registry.names()) == {
            "solve_acopf_case", "modify_bus_load", "get_network_status",
            "solve_base_case", "run_n1_contingency_analysis",
            "analyze_specific_contingency", "get_contingency_status"}

    def test_duplicate_name_rejected(self):
        reg = ToolRegistry()
        spec = ToolSpec(name="t", description="d")
        register_tool(reg, spec, lambda *a: None)
        with pytest.raises(DuplicateNameError):
            reg.register(spec, lambda *a: None)

    def test_capability_lookup(self, registry):
        names = {s.name for s in registry.by_capability("re-optimization")}
        assert "solve_acopf_case" in names
        assert "modify_bus_load" in names
        sweep = {s.name for s in registry.by_capability("reliability-sweep")}
        assert "run_n1_contingency_analysis" in sweep

    def test_declarations_shape(self, registry):
        decls = registry.declarations()
        assert len(decls) == 7
        for d in decls:
            assert d["type"] == "function"
            params = d["function"]["parameters"]
            assert params["additionalProperties"] is False

    def test_schema_closure_self_test(self, registry):
        assert registry.self_test() == []

    def test_unknown_tool(self, registry, ctx):
        with pytest.raises(UnknownToolError):
            registry.invoke("no_such_tool", {}, ctx)


class TestArgValidation:
    def test_unknown_field_rejected(self, registry, ctx):
        with pytest.raises(ArgsInvalidError, match="unknown field"):
            registry.invoke("modify_bus_load", {"bus": 1, "p_mw": 10, "zz": 1}, ctx)

    def test_missing_required(self, registry, ctx):
        with pytest.raises(ArgsInvalidError, match="required"):
            registry.invoke("modify_bus_load", {"bus": 1}, ctx)

    def test_bounds_enforced(self, registry, ctx):
        with pytest.raises(ArgsInvalidError, match="minimum"):
            registry.invoke("analyze_specific_contingency",
                            {"element": -1, "kind": "line"}, ctx)

    def test_enum_enforced(self, registry, ctx):
        with pytest.raises(ArgsInvalidError, match="one of"):
            registry.invoke("analyze_specific_contingency",
                            {"element": 0, "kind": "cable"}, ctx)

    def test_type_enforced(self, registry, ctx):
        with pytest.raises(ArgsInvalidError, match="integer"):
            registry.invoke("modify_bus_load", {"bus": 1.5, "p_mw": 10}, ctx)


class TestInvoke:
    def test_solve_case_payload(self, registry, ctx):
        r = registry.invoke("solve_acopf_case", {"case_name": "case14"}, ctx)
        assert r.ok
        assert r.payload["objective_cost"] > 0
        assert "min_voltage_pu" in r.payload
        assert r.validation.passed
        assert r.provenance.tool_name == "solve_acopf_case"

    def test_modify_grows_diff_log_and_resolves(self, registry, ctx):
        registry.invoke("solve_acopf_case", {"case_name": "case14"}, ctx)
        before = len(ctx.diff_log)
        r = registry.invoke("modify_bus_load", {"bus": 10, "p_mw": 50.0}, ctx)
        assert r.ok
        assert len(ctx.diff_log) == before + 1
        assert ctx.network.buses[ctx.network.bus_index(10)].pd_mw == 50.0
        assert ctx.freshness_check("acopf").reuse    # artifact stored after the diff

    def test_unknown_case_is_result_not_exception(self, registry, ctx):
        v0 = ctx.version
        r = registry.invoke("solve_acopf_case", {"case_name": "case999"}, ctx)
        assert not r.ok
        assert "UnknownCase" in r.error
        assert ctx.version == v0
        assert ctx.source.name == "case14"

    def test_failed_invocation_leaves_context_version(self, registry, ctx):
        registry.invoke("solve_acopf_case", {"case_name": "case14"}, ctx)
        v0 = ctx.version
        net0 = ctx.network
        r = registry.invoke("modify_bus_load", {"bus": 998, "p_mw": 10.0}, ctx)
        assert not r.ok
        assert ctx.version == v0
        assert ctx.network == net0

    def test_sweep_requires_fresh_base(self, registry, ctx):
        r = registry.invoke("run_n1_contingency_analysis", {}, ctx)
        assert not r.ok
        assert "solve_base_case" in (r.error or "") + (r.clarification or "")

    def test_ok_implies_gates_recheckable(self, registry, ctx):
        registry.invoke("solve_acopf_case", {"case_name": "case14"}, ctx)
        r = registry.invoke("solve_base_case", {}, ctx)
        assert r.ok and r.validation.passed
        pf = ctx.powerflow_solution()
        from gridbench.opf import apply_dispatch
        dnet = apply_dispatch(ctx.network, ctx.acopf_solution())
        balance = powerflow.check_balance(dnet, pf)
        assert balance.ok
        assert balance.worst_mismatch_pu < 1e-4

    def test_every_result_carries_validation(self, registry, ctx):
        for name, args in (("solve_acopf_case", {"case_name": "case14"}),
                           ("get_network_status", {}),
                           ("get_contingency_status", {})):
            r = registry.invoke(name, args, ctx)
            assert r.validation is not None
            if r.ok:
                assert r.validation.passed


class TestRecoveryLadder:
    def test_gate_arithmetic_triggers_first_rung(self):
        gate = GateOutcome(converged=True, balance_mismatch_pu=5e-4)
        action = validate_result(gate, powerflow.ValidationThresholds(), rung=0)
        assert action is RecoveryAction.RETRY_FLAT
        assert not gate.passed

    def test_second_rung_relaxed(self):
        gate = GateOutcome(converged=False)
        assert validate_result(gate, powerflow.ValidationThresholds(), 1) \
            is RecoveryAction.RETRY_RELAXED

    def test_third_rung_clarifies(self):
        gate = GateOutcome(converged=False)
        assert validate_result(gate, powerflow.ValidationThresholds(), 2) \
            is RecoveryAction.CLARIFY

    def test_pass_needs_all_gates(self):
        th = powerflow.ValidationThresholds()
        good = GateOutcome(converged=True, balance_mismatch_pu=1e-9,
                           min_voltage_pu=1.0, max_voltage_pu=1.0, modified_ok=True)
        assert validate_result(good, th, 0) is None
        assert good.passed
        insane = GateOutcome(converged=True, min_voltage_pu=0.2)
        assert validate_result(insane, th, 0) is RecoveryAction.RETRY_FLAT
        unapplied = GateOutcome(converged=True, modified_ok=False)
        assert validate_result(unapplied, th, 0) is not None

    def test_ladder_exhaustion_requests_clarification(self, ctx):
        reg = ToolRegistry()
        calls = []

        def failing_executor(context, args, attempt: Attempt, th) -> Execution:
            calls.append(attempt.label)
            return Execution(payload={}, gate=GateOutcome(converged=False))

        reg.register(ToolSpec(name="always_fails", description="d"), failing_executor)
        r = reg.invoke("always_fails", {}, ctx)
        assert not r.ok
        assert calls == ["default", RecoveryAction.RETRY_FLAT.value,
                         RecoveryAction.RETRY_RELAXED.value]
        assert r.validation.recovery_steps == [RecoveryAction.RETRY_FLAT.value,
                                               RecoveryAction.RETRY_RELAXED.value]
        assert "clarify" in (r.clarification or "").lower()

    def test_infeasible_case_walks_ladder(self, registry, ctx):
        registry.invoke("solve_acopf_case", {"case_name": "case14"}, ctx)
        # demand far above total generation: every rung fails, clarification returned
        r = registry.invoke("modify_bus_load", {"bus": 3, "p_mw": 90000.0}, ctx)
        assert not r.ok
        assert r.clarification
        assert ctx.network.buses[ctx.network.bus_index(3)].pd_mw != 90000.0


class TestDescriptors:
    def test_full_contracts_exported(self, registry):
        descs = registry.descriptors()
        assert len(descs) == 7
        solve = next(d for d in descs if d["name"] == "solve_acopf_case")
        assert "objective_cost" in solve["result_fields"]
        import json
        json.dumps(descs)   # must be JSON-serializable verbatim
