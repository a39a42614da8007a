"""Schema-validated tool registry.

Every callable tool declares a typed parameter/result contract; every result
passes the numerical gates (convergence, balance mismatch, voltage sanity,
modified-element echo) before an agent may cite it.  Gate failure triggers
the recovery ladder: flat-start retry, relaxed inner tolerance, then a
clarification request.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from pydantic import BaseModel, Field

from . import __version__
from .caseio import BUILTIN_CASES, UnknownCaseError
from .contingency import (
    ContingencyAnalysisResult,
    OutageKind,
    Scope,
    case_for_element,
    evaluate_contingency,
    run_n1,
)
from .network import Modification, ModKind, PowerSystem
from .opf import ACOPFSolution, OpfOptions, apply_dispatch, assess_quality, solve_acopf
from .powerflow import (
    DivergedError,
    IslandWithoutSlackError,
    PowerFlowSolution,
    ValidationThresholds,
    check_balance,
    solve_powerflow,
)
from .session import AgentContext, Provenance


class UnknownToolError(LookupError):
    pass


class DuplicateNameError(ValueError):
    pass


class ArgsInvalidError(ValueError):
    def __init__(self, fieldname: str, reason: str):
        self.field = fieldname
        self.reason = reason
        super().__init__(f"invalid argument {fieldname!r}: {reason}")


class ParamSpec(BaseModel):
    name: str
    type: str                                # "string" | "number" | "integer"
    description: str = ""
    required: bool = True
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    enum: Optional[list[str]] = None


class ToolSpec(BaseModel):
    name: str
    description: str
    parameters: list[ParamSpec] = Field(default_factory=list)
    result_fields: dict[str, str] = Field(default_factory=dict)
    capabilities: list[str] = Field(default_factory=list)
    examples: list[dict] = Field(default_factory=list)

    def validate_args(self, args: dict[str, Any]) -> dict[str, Any]:
        """Bounds-checked, unknown-field-rejecting argument validation."""
        known = {p.name for p in self.parameters}
        for key in args:
            if key not in known:
                raise ArgsInvalidError(key, "unknown field (rejected, not ignored)")
        clean: dict[str, Any] = {}
        for p in self.parameters:
            if p.name not in args or args[p.name] is None:
                if p.required:
                    raise ArgsInvalidError(p.name, "required field missing")
                continue
            value = args[p.name]
            if p.type == "string":
                if not isinstance(value, str):
                    raise ArgsInvalidError(p.name, f"expected string, got {type(value).__name__}")
                if p.enum and value not in p.enum:
                    raise ArgsInvalidError(p.name, f"must be one of {p.enum}")
            elif p.type in ("number", "integer"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ArgsInvalidError(p.name, f"expected {p.type}, got {type(value).__name__}")
                if p.type == "integer" and int(value) != value:
                    raise ArgsInvalidError(p.name, "expected an integer")
                value = int(value) if p.type == "integer" else float(value)
                if p.minimum is not None and value < p.minimum:
                    raise ArgsInvalidError(p.name, f"below minimum {p.minimum}")
                if p.maximum is not None and value > p.maximum:
                    raise ArgsInvalidError(p.name, f"above maximum {p.maximum}")
            else:
                raise ArgsInvalidError(p.name, f"unsupported parameter type {p.type}")
            clean[p.name] = value
        return clean

    def declaration(self) -> dict[str, Any]:
        """Chat-completions style function declaration."""
        props: dict[str, Any] = {}
        required = []
        for p in self.parameters:
            entry: dict[str, Any] = {"type": p.type, "description": p.description}
            if p.enum:
                entry["enum"] = p.enum
            if p.minimum is not None:
                entry["minimum"] = p.minimum
            if p.maximum is not None:
                entry["maximum"] = p.maximum
            props[p.name] = entry
            if p.required:
                required.append(p.name)
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {"type": "object", "properties": props,
                               "required": required, "additionalProperties": False},
            },
        }


class GateOutcome(BaseModel):
    converged: bool = True
    balance_mismatch_pu: float = 0.0
    min_voltage_pu: float = 1.0
    max_voltage_pu: float = 1.0
    modified_ok: bool = True
    passed: bool = True
    failures: list[str] = Field(default_factory=list)
    recovery_steps: list[str] = Field(default_factory=list)


class ToolResult(BaseModel):
    tool_name: str
    ok: bool
    payload: dict[str, Any] = Field(default_factory=dict)
    validation: GateOutcome = Field(default_factory=GateOutcome)
    provenance: Provenance
    error: Optional[str] = None
    clarification: Optional[str] = None


class RecoveryAction(enum.Enum):
    RETRY_FLAT = "retry_flat_start"
    RETRY_RELAXED = "retry_relaxed_tolerance"
    CLARIFY = "request_clarification"


@dataclass
class Attempt:
    """Solver knobs for one rung of the recovery ladder."""
    start: str = "warm"
    nr_tol_pu: float = 1e-8
    label: str = "default"


LADDER = (
    Attempt(start="warm", nr_tol_pu=1e-8, label="default"),
    Attempt(start="flat", nr_tol_pu=1e-8, label=RecoveryAction.RETRY_FLAT.value),
    Attempt(start="flat", nr_tol_pu=1e-6, label=RecoveryAction.RETRY_RELAXED.value),
)


def validate_result(gate: GateOutcome, thresholds: ValidationThresholds,
                    rung: int) -> Optional[RecoveryAction]:
    """Apply the gates; returns the next recovery action, or None on pass."""
    failures = []
    if not gate.converged:
        failures.append("solver did not converge")
    if gate.balance_mismatch_pu >= thresholds.balance_tol_pu:
        failures.append(f"balance mismatch {gate.balance_mismatch_pu:.2e} p.u. "
                        f"exceeds {thresholds.balance_tol_pu:g}")
    if not (thresholds.v_sanity_low_pu <= gate.min_voltage_pu
            and gate.max_voltage_pu <= thresholds.v_sanity_high_pu):
        failures.append("voltage outside sanity range")
    if not gate.modified_ok:
        failures.append("modified elements do not reflect requested values")
    gate.failures = failures
    gate.passed = not failures
    if gate.passed:
        return None
    if rung == 0:
        return RecoveryAction.RETRY_FLAT
    if rung == 1:
        return RecoveryAction.RETRY_RELAXED
    return RecoveryAction.CLARIFY


@dataclass
class CaseSwitch:
    source: Any
    baseline: PowerSystem


@dataclass
class Execution:
    """What an executor produced before commit: payload plus gate inputs and
    the context mutations to apply if the gates pass."""
    payload: dict[str, Any]
    gate: GateOutcome
    artifacts: list[tuple[str, BaseModel]] = field(default_factory=list)
    modifications: list[Modification] = field(default_factory=list)
    cache_absorb: Any = None
    solver_options: dict[str, Any] = field(default_factory=dict)
    case_switch: Optional[CaseSwitch] = None


Executor = Callable[[AgentContext, dict[str, Any], Attempt, ValidationThresholds], Execution]


@dataclass
class _Entry:
    spec: ToolSpec
    executor: Executor


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, _Entry] = {}

    def register(self, spec: ToolSpec, executor: Executor) -> None:
        if spec.name in self._tools:
            raise DuplicateNameError(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = _Entry(spec, executor)

    def names(self) -> list[str]:
        return list(self._tools)

    def spec(self, name: str) -> ToolSpec:
        if name not in self._tools:
            raise UnknownToolError(f"unknown tool {name!r}")
        return self._tools[name].spec

    def by_capability(self, tag: str) -> list[ToolSpec]:
        return [e.spec for e in self._tools.values() if tag in e.spec.capabilities]

    def declarations(self) -> list[dict[str, Any]]:
        return [e.spec.declaration() for e in self._tools.values()]

    def descriptors(self) -> list[dict[str, Any]]:
        """Full machine-readable tool contracts (parameters and result fields)."""
        return [e.spec.model_dump(mode="json") for e in self._tools.values()]

    def self_test(self) -> list[str]:
        """Schema closure: every example must validate against its own schema."""
        problems = []
        for e in self._tools.values():
            for ex in e.spec.examples:
                try:
                    e.spec.validate_args(ex)
                except ArgsInvalidError as err:
                    problems.append(f"{e.spec.name}: example {ex!r} fails: {err}")
        return problems

    def invoke(self, name: str, args: dict[str, Any], ctx: AgentContext,
               thresholds: Optional[ValidationThresholds] = None) -> ToolResult:
        """Validate args, run the executor through the recovery ladder, gate the
        result, and commit context mutations atomically on success."""
        if name not in self._tools:
            raise UnknownToolError(f"unknown tool {name!r}")
        entry = self._tools[name]
        clean = entry.spec.validate_args(args)
        th = thresholds or ValidationThresholds()

        recovery_steps: list[str] = []
        last_execution: Optional[Execution] = None
        for rung, attempt in enumerate(LADDER):
            try:
                execution = entry.executor(ctx, clean, attempt, th)
            except (UnknownCaseError, LookupError, ValueError) as exc:
                # precondition failure: deterministic, retrying cannot help
                gate = GateOutcome(converged=False, passed=False,
                                   failures=[str(exc)],
                                   recovery_steps=list(recovery_steps))
                return ToolResult(
                    tool_name=name, ok=False, validation=gate,
                    provenance=self._provenance(name, ctx, {}),
                    error=f"{type(exc).__name__}: {exc}",
                    clarification=str(exc))
            except (DivergedError, IslandWithoutSlackError) as exc:
                gate = GateOutcome(converged=False, passed=False,
                                   failures=[str(exc)],
                                   recovery_steps=list(recovery_steps))
                action = validate_result(gate, th, rung)
                if action in (RecoveryAction.RETRY_FLAT, RecoveryAction.RETRY_RELAXED):
                    recovery_steps.append(action.value)
                    continue
                gate.recovery_steps = recovery_steps
                return ToolResult(
                    tool_name=name, ok=False, validation=gate,
                    provenance=self._provenance(name, ctx, {}),
                    error=f"{type(exc).__name__}: {exc}",
                    clarification="The request could not be completed numerically "
                                  "after flat-start and relaxed-tolerance retries; "
                                  "please clarify or relax the scenario.")

            last_execution = execution
            execution.gate.recovery_steps = list(recovery_steps)
            action = validate_result(execution.gate, th, rung)
            if action is None:
                return self._commit(name, ctx, execution)
            if action is RecoveryAction.CLARIFY:
                break
            recovery_steps.append(action.value)

        gate = last_execution.gate if last_execution else GateOutcome(converged=False,
                                                                      passed=False)
        gate.recovery_steps = recovery_steps
        return ToolResult(
            tool_name=name, ok=False, validation=gate,
            provenance=self._provenance(name, ctx, {}),
            error="; ".join(gate.failures) or "validation gates failed",
            clarification="Validation gates failed after flat-start and "
                          "relaxed-tolerance retries; please clarify the request "
                          "or adjust the scenario.")

    def _commit(self, name: str, ctx: AgentContext, execution: Execution) -> ToolResult:
        if execution.case_switch is not None:
            sw = execution.case_switch
            ctx.source = sw.source
            ctx.baseline = sw.baseline
            ctx.network = sw.baseline
            ctx.diff_log = []
            ctx.diff_digests = []
            ctx.artifacts = {}
            ctx.artifact_history = []
            ctx.contingency_entries = {}
            ctx.version += 1
        for mod in execution.modifications:
            ctx.record_modification(mod)
        prov = self._provenance(name, ctx, execution.solver_options)
        prov.validation_flags = execution.gate.model_dump(mode="json")
        for kind, payload_model in execution.artifacts:
            ctx.store_artifact(kind, payload_model, prov.model_copy())
        if execution.cache_absorb is not None:
            ctx.absorb_cache(execution.cache_absorb)
        return ToolResult(tool_name=name, ok=True, payload=execution.payload,
                          validation=execution.gate, provenance=prov)

    @staticmethod
    def _provenance(name: str, ctx: AgentContext, options: dict[str, Any]) -> Provenance:
        return Provenance(tool_name=name, tool_version=__version__,
                          solver_options=options, timestamp=time.time(),
                          context_version=ctx.version,
                          diff_position=len(ctx.diff_log))


def register_tool(registry: ToolRegistry, spec: ToolSpec, executor: Executor) -> ToolRegistry:
    registry.register(spec, executor)
    return registry


# ---------------------------------------------------------------------------
# domain executors


def _resolve_case(ctx: AgentContext, case_name: str):
    """Network to operate on plus a pending case switch when it differs."""
    if ctx.source.name == case_name:
        return ctx.network, None
    from .caseio import load_source, parse_case
    source = load_source(case_name)
    baseline = parse_case(source.raw_text, name=case_name)
    return baseline, CaseSwitch(source=source, baseline=baseline)


def _acopf_payload(sol: ACOPFSolution, quality=None) -> dict[str, Any]:
    payload = {
        "case_name": sol.case_name,
        "solved": sol.solved,
        "objective_cost": round(sol.objective_cost, 2),
        "losses_mw": round(sol.losses_mw, 3),
        "min_voltage_pu": round(sol.min_voltage_pu, 4),
        "max_voltage_pu": round(sol.max_voltage_pu, 4),
        "max_loading_percent": round(sol.max_loading_percent, 1),
        "iterations": sol.iterations,
        "convergence_message": sol.convergence_message,
        "total_dispatch_mw": round(sum(sol.gen_p_mw), 1),
    }
    if quality is not None:
        payload["quality_overall"] = quality.overall_score
    return payload


def _exec_solve_acopf(ctx: AgentContext, args, attempt: Attempt,
                      th: ValidationThresholds) -> Execution:
    case_name = args.get("case_name", ctx.source.name)
    net, switch = _resolve_case(ctx, case_name)
    opt = OpfOptions() if attempt.nr_tol_pu <= 1e-8 else OpfOptions(tol=attempt.nr_tol_pu)
    sol = solve_acopf(net, options=opt, thresholds=th)
    gate = GateOutcome(converged=sol.solved,
                       balance_mismatch_pu=sol.max_balance_mismatch_pu,
                       min_voltage_pu=sol.min_voltage_pu,
                       max_voltage_pu=sol.max_voltage_pu)
    quality = assess_quality(sol, net) if sol.solved else None
    payload = _acopf_payload(sol, quality)
    return Execution(payload=payload, gate=gate, artifacts=[("acopf", sol)],
                     case_switch=switch,
                     solver_options={"tol": opt.tol, "max_iterations": opt.max_iterations,
                                     "start": attempt.start})


def _exec_modify_bus_load(ctx: AgentContext, args, attempt: Attempt,
                          th: ValidationThresholds) -> Execution:
    bus = int(args["bus"])
    p_mw = float(args["p_mw"])
    payload_mod: dict[str, float] = {"p_mw": p_mw}
    if "q_mvar" in args and args["q_mvar"] is not None:
        payload_mod["q_mvar"] = float(args["q_mvar"])
    mod = Modification(ModKind.SET_BUS_LOAD, bus, payload_mod,
                       timestamp=time.time(), note=f"set load at bus {bus}")
    candidate = ctx.network
    from .network import apply_modification
    modified = apply_modification(candidate, mod)

    b = modified.buses[modified.bus_index(bus)]
    modified_ok = abs(b.pd_mw - p_mw) < 1e-9
    if "q_mvar" in payload_mod:
        modified_ok = modified_ok and abs(b.qd_mvar - payload_mod["q_mvar"]) < 1e-9

    sol = solve_acopf(modified, thresholds=th)
    gate = GateOutcome(converged=sol.solved,
                       balance_mismatch_pu=sol.max_balance_mismatch_pu,
                       min_voltage_pu=sol.min_voltage_pu,
                       max_voltage_pu=sol.max_voltage_pu,
                       modified_ok=modified_ok)
    payload = _acopf_payload(sol, assess_quality(sol, modified) if sol.solved else None)
    payload["modified_bus"] = bus
    payload["new_load_mw"] = p_mw
    return Execution(payload=payload, gate=gate,
                     artifacts=[("acopf", sol)], modifications=[mod],
                     solver_options={"start": attempt.start})


def _exec_network_status(ctx: AgentContext, args, attempt, th) -> Execution:
    net = ctx.network
    sol = ctx.acopf_solution()
    fresh = ctx.freshness_check("acopf")
    payload = {
        "case_name": ctx.source.name,
        "bus_count": net.n_bus,
        "generator_count": net.n_gen,
        "branch_count": net.n_branch,
        "total_load_mw": round(net.total_load_mw(), 1),
        "diff_count": len(ctx.diff_log),
        "acopf_fresh": fresh.reuse,
    }
    if sol is not None:
        payload["objective_cost"] = round(sol.objective_cost, 2)
        payload["solved"] = sol.solved
    return Execution(payload=payload, gate=GateOutcome())


def _base_powerflow(ctx: AgentContext, attempt: Attempt,
                    th: ValidationThresholds) -> tuple[PowerFlowSolution, PowerSystem, bool]:
    """Base-case power flow for contingency work, reusing a fresh ACOPF dispatch."""
    reused = False
    acopf_fresh = ctx.freshness_check("acopf")
    if acopf_fresh.reuse:
        sol = ctx.acopf_solution()
        if sol is not None and sol.solved:
            net = apply_dispatch(ctx.network, sol)
            reused = True
        else:
            net = ctx.network
    else:
        opf_sol = solve_acopf(ctx.network, thresholds=th)
        if not opf_sol.solved:
            raise DivergedError(opf_sol.iterations, 1.0)
        net = apply_dispatch(ctx.network, opf_sol)
    tol = ValidationThresholds(**{**th.model_dump(), "nr_tol_pu": attempt.nr_tol_pu})
    pf = solve_powerflow(net, start=attempt.start if attempt.start == "flat" else "flat",
                         thresholds=tol, enforce_q_limits=False)
    return pf, net, reused


def _exec_solve_base_case(ctx: AgentContext, args, attempt: Attempt,
                          th: ValidationThresholds) -> Execution:
    case_name = args.get("case_name", ctx.source.name)
    net, switch = _resolve_case(ctx, case_name)
    fresh = switch is None and ctx.freshness_check("acopf").reuse
    if not fresh:
        opf_sol = solve_acopf(net, thresholds=th)
        gate_opf = GateOutcome(converged=opf_sol.solved,
                               balance_mismatch_pu=opf_sol.max_balance_mismatch_pu,
                               min_voltage_pu=opf_sol.min_voltage_pu,
                               max_voltage_pu=opf_sol.max_voltage_pu)
        if not opf_sol.solved:
            return Execution(payload={}, gate=gate_opf, case_switch=switch)
        acopf_artifacts = [("acopf", opf_sol)]
        dispatch_net = apply_dispatch(net, opf_sol)
        reused = False
    else:
        opf_sol = ctx.acopf_solution()
        acopf_artifacts = []
        dispatch_net = apply_dispatch(net, opf_sol)
        reused = True

    tol = ValidationThresholds(**{**th.model_dump(), "nr_tol_pu": attempt.nr_tol_pu})
    pf = solve_powerflow(dispatch_net, start="flat", thresholds=tol,
                         enforce_q_limits=False)
    balance = check_balance(dispatch_net, pf, tol)
    gate = GateOutcome(converged=pf.converged,
                       balance_mismatch_pu=balance.worst_mismatch_pu,
                       min_voltage_pu=pf.min_voltage_pu,
                       max_voltage_pu=pf.max_voltage_pu)
    payload = {
        "case_name": case_name,
        "converged": pf.converged,
        "iterations": pf.iterations,
        "losses_mw": round(pf.losses_mw, 3),
        "max_loading_percent": round(pf.max_loading_percent, 1),
        "min_voltage_pu": round(pf.min_voltage_pu, 4),
        "reused_acopf_dispatch": reused,
        "objective_cost": round(opf_sol.objective_cost, 2),
    }
    return Execution(payload=payload, gate=gate,
                     artifacts=acopf_artifacts + [("powerflow", pf)],
                     case_switch=switch,
                     solver_options={"start": "flat", "nr_tol_pu": tol.nr_tol_pu,
                                     "base": "acopf_dispatch"})


def _exec_run_n1(ctx: AgentContext, args, attempt: Attempt,
                 th: ValidationThresholds) -> Execution:
    scope = Scope(args.get("scope", "all"))
    pf_fresh = ctx.freshness_check("powerflow")
    acopf_fresh = ctx.freshness_check("acopf")
    if not (pf_fresh.reuse and acopf_fresh.reuse):
        raise ValueError("base case is not solved or stale; run solve_base_case first")
    base_pf = ctx.powerflow_solution()
    dispatch_net = apply_dispatch(ctx.network, ctx.acopf_solution())
    cache = ctx.contingency_cache()
    result = run_n1(dispatch_net, base_pf, scope=scope, cache=cache,
                    thresholds=th, top_k=int(args.get("top_k", 5)))
    gate = GateOutcome(converged=base_pf.converged,
                       balance_mismatch_pu=base_pf.max_mismatch_pu,
                       min_voltage_pu=base_pf.min_voltage_pu,
                       max_voltage_pu=base_pf.max_voltage_pu)
    worst = max((r.max_loading_percent for r in result.results), default=0.0)
    payload = {
        "case_name": result.case_name,
        "scope": scope.value,
        "contingency_count": len(result.results),
        "secure": result.summary.secure,
        "violations": result.summary.violations,
        "islanding": result.summary.islanding,
        "diverged": result.summary.diverged,
        "max_overload_percent": round(worst, 1),
        "new_solves": result.new_solves,
        "cache_hits": len(result.results) - result.new_solves,
        "top_critical": [
            {"rank": i + 1,
             "kind": ce.contingency.outage_kind.value,
             "element_index": ce.contingency.element_index,
             "label": ce.contingency.label,
             "score": round(ce.score, 2),
             "n_overloads": ce.evidence.n_overloads,
             "worst_overload_excess_percent": round(ce.evidence.worst_overload_excess_percent, 1),
             "curtailment_mw": round(ce.evidence.curtailment_mw, 1),
             "justification": ce.justification}
            for i, ce in enumerate(result.ranking)],
    }
    return Execution(payload=payload, gate=gate,
                     artifacts=[("contingency", result)], cache_absorb=cache,
                     solver_options={"scope": scope.value})


def _exec_specific_contingency(ctx: AgentContext, args, attempt: Attempt,
                               th: ValidationThresholds) -> Execution:
    kind = OutageKind(args["kind"])
    element = int(args["element"])
    pf_fresh = ctx.freshness_check("powerflow")
    acopf_fresh = ctx.freshness_check("acopf")
    if not (pf_fresh.reuse and acopf_fresh.reuse):
        raise ValueError("base case is not solved or stale; run solve_base_case first")
    base_pf = ctx.powerflow_solution()
    dispatch_net = apply_dispatch(ctx.network, ctx.acopf_solution())
    case = case_for_element(dispatch_net, element, kind)
    cache = ctx.contingency_cache()
    hit = cache.get(case)
    if hit is not None:
        res = hit.model_copy(update={"from_cache": True})
    else:
        res = evaluate_contingency(dispatch_net, base_pf, case, th)
        cache.put(case, res)
    payload = {
        "kind": kind.value,
        "element_index": element,
        "label": case.label,
        "status": res.status.value,
        "max_loading_percent": round(res.max_loading_percent, 1),
        "overload_count": len(res.overloaded_branches),
        "min_voltage_pu": round(res.min_voltage_pu, 4),
        "curtailment_mw": round(res.curtailment_mw, 1),
        "from_cache": res.from_cache,
    }
    gate = GateOutcome(converged=base_pf.converged,
                       balance_mismatch_pu=base_pf.max_mismatch_pu,
                       min_voltage_pu=min(base_pf.min_voltage_pu,
                                          res.min_voltage_pu or 1.0),
                       max_voltage_pu=base_pf.max_voltage_pu)
    return Execution(payload=payload, gate=gate, cache_absorb=cache,
                     solver_options={"kind": kind.value, "element": element})


def _exec_contingency_status(ctx: AgentContext, args, attempt, th) -> Execution:
    art = ctx.contingency_result()
    fresh = ctx.freshness_check("contingency")
    if art is None:
        payload = {"available": False, "fresh": False,
                   "advice": "no contingency analysis stored; run run_n1_contingency_analysis"}
    else:
        payload = {
            "available": True,
            "fresh": fresh.reuse,
            "case_name": art.case_name,
            "scope": art.scope.value,
            "contingency_count": len(art.results),
            "secure": art.summary.secure,
            "violations": art.summary.violations,
            "islanding": art.summary.islanding,
            "diverged": art.summary.diverged,
            "cached_entries": len(ctx.contingency_entries),
        }
    return Execution(payload=payload, gate=GateOutcome())


def build_default_registry() -> ToolRegistry:
    """The seven domain tools over the deterministic engines."""
    reg = ToolRegistry()
    case_enum = list(BUILTIN_CASES)

    reg.register(ToolSpec(
        name="solve_acopf_case",
        description="Load an IEEE test case and solve its AC optimal power flow.",
        parameters=[ParamSpec(name="case_name", type="string",
                              description=f"Bundled case identifier, one of {', '.join(case_enum)}")],
        result_fields={"objective_cost": "$/h", "losses_mw": "MW",
                       "min_voltage_pu": "p.u.", "max_voltage_pu": "p.u."},
        capabilities=["re-optimization", "economic-dispatch"],
        examples=[{"case_name": "case118"}, {"case_name": "case14"}],
    ), _exec_solve_acopf)

    reg.register(ToolSpec(
        name="modify_bus_load",
        description="Set the load at a bus (MW, optionally MVAr) and re-solve the ACOPF.",
        parameters=[
            ParamSpec(name="bus", type="integer", minimum=0,
                      description="External bus number"),
            ParamSpec(name="p_mw", type="number", minimum=0,
                      description="New active load in MW"),
            ParamSpec(name="q_mvar", type="number", required=False,
                      description="New reactive load in MVAr"),
        ],
        result_fields={"objective_cost": "$/h", "new_load_mw": "MW"},
        capabilities=["what-if", "re-optimization"],
        examples=[{"bus": 10, "p_mw": 50.0}],
    ), _exec_modify_bus_load)

    reg.register(ToolSpec(
        name="get_network_status",
        description="Current network and solution status of the session.",
        parameters=[],
        result_fields={"case_name": "id", "diff_count": "count"},
        capabilities=["status"],
        examples=[{}],
    ), _exec_network_status)

    reg.register(ToolSpec(
        name="solve_base_case",
        description="Solve the base-case power flow (from the optimal dispatch) "
                    "before contingency analysis.",
        parameters=[ParamSpec(name="case_name", type="string", required=False,
                              description="Bundled case identifier; defaults to the session case")],
        result_fields={"losses_mw": "MW", "max_loading_percent": "%"},
        capabilities=["reliability-sweep"],
        examples=[{"case_name": "case118"}, {}],
    ), _exec_solve_base_case)

    reg.register(ToolSpec(
        name="run_n1_contingency_analysis",
        description="Run the comprehensive N-1 sweep over lines, transformers, or all.",
        parameters=[
            ParamSpec(name="scope", type="string", required=False,
                      enum=["lines", "transformers", "all"],
                      description="Outage scope (default all)"),
            ParamSpec(name="top_k", type="integer", required=False, minimum=1, maximum=50,
                      description="Number of ranked critical elements to return (default 5)"),
        ],
        result_fields={"contingency_count": "count", "max_overload_percent": "%"},
        capabilities=["reliability-sweep"],
        examples=[{"scope": "lines"}, {}],
    ), _exec_run_n1)

    reg.register(ToolSpec(
        name="analyze_specific_contingency",
        description="Evaluate the outage of one specific line or transformer.",
        parameters=[
            ParamSpec(name="element", type="integer", minimum=0,
                      description="Element index within its kind (solver order)"),
            ParamSpec(name="kind", type="string", enum=["line", "transformer"],
                      description="Element kind"),
        ],
        result_fields={"status": "enum", "max_loading_percent": "%"},
        capabilities=["reliability-sweep", "what-if"],
        examples=[{"element": 6, "kind": "line"}],
    ), _exec_specific_contingency)

    reg.register(ToolSpec(
        name="get_contingency_status",
        description="Status and summary of the stored contingency analysis.",
        parameters=[],
        result_fields={"available": "flag", "contingency_count": "count"},
        capabilities=["status"],
        examples=[{}],
    ), _exec_contingency_status)

    return reg
