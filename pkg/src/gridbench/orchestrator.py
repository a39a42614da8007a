"""Agentic layer: intent planning, plan execution over validated tools, and
narration rendered exclusively from stored structured results.

The deterministic planner (rule grammar) is the default and the test
substrate; a live chat-model backend is additive and exchanges the same tool
declarations through a chat-completions style HTTP API.
"""

from __future__ import annotations

import enum
import json
import os
import re
import time
from typing import Any, Optional

import httpx
from pydantic import BaseModel, Field

from .caseio import BUILTIN_CASES
from .prompts import PLANNER_PROMPT
from .session import AgentContext, StepStatus, WorkflowState, WorkflowStep
from .tools import ArgsInvalidError, ToolRegistry, ToolResult, UnknownToolError


class UnparseableError(ValueError):
    def __init__(self, clarification: str):
        super().__init__(clarification)
        self.clarification = clarification


class PlanInvalidError(ValueError):
    pass


class BackendError(RuntimeError):
    pass


class MalformedBackendReply(BackendError):
    pass


class AgentName(enum.Enum):
    ACOPF = "acopf"
    CONTINGENCY = "contingency"
    COORDINATOR = "coordinator"


class PlanStep(BaseModel):
    tool_name: str
    args: dict[str, Any] = Field(default_factory=dict)
    rationale: str = ""


class Plan(BaseModel):
    utterance: str
    assigned_agent: AgentName
    steps: list[PlanStep]
    confidence: float = 1.0


class ProvenanceEntry(BaseModel):
    numeral: str                  # token exactly as rendered
    field: str                    # "tool_name.field_path"
    value: Any


class Turn(BaseModel):
    role: str                     # "user" | "agent" | "tool"
    content: str
    payload_ref: Optional[str] = None
    timestamp: float = 0.0
    latency_ms: float = 0.0
    solver_iterations: Optional[int] = None
    token_usage: Optional[dict[str, int]] = None


class Transcript(BaseModel):
    turns: list[Turn] = Field(default_factory=list)


class TurnResult(BaseModel):
    response: str
    provenance: list[ProvenanceEntry] = Field(default_factory=list)
    plan: Optional[Plan] = None
    tool_results: list[ToolResult] = Field(default_factory=list)
    workflow: Optional[WorkflowState] = None
    ok: bool = True


class BackendMode(enum.Enum):
    DETERMINISTIC = "deterministic"
    LIVE = "live"


class BackendConfig(BaseModel):
    mode: BackendMode = BackendMode.DETERMINISTIC
    backend_url: str = ""
    model: str = ""
    api_key_env: str = "CHAT_BACKEND_API_KEY"
    timeout_s: float = 60.0
    max_tool_rounds: int = 8
    system_prompt: str = ""          # overrides the default agent prompt


# ---------------------------------------------------------------------------
# deterministic planner

_CASE_RE = re.compile(r"(?:case\s*|ieee[\s-]*)(\d+)", re.IGNORECASE)
_BUS_LOAD_RE = re.compile(
    r"load\s+(?:for|at|of|on)?\s*bus\s*(\d+)\s*(?:to|=|at)\s*([\d.]+)\s*mw"
    r"(?:\s*(?:,|and)?\s*([\d.]+)\s*mvar)?", re.IGNORECASE)
_BUS_LOAD_ALT_RE = re.compile(
    r"bus\s*(\d+)\s*(?:'s)?\s*load\s*(?:to|=|at)\s*([\d.]+)\s*mw"
    r"(?:\s*(?:,|and)?\s*([\d.]+)\s*mvar)?", re.IGNORECASE)
_OUTAGE_RE = re.compile(
    r"(?:outage|remove|removing|take\s+out|trip|drop)\s+(?:of\s+)?"
    r"(line|transformer)\s*(?:idx|index|#)?\s*(\d+)", re.IGNORECASE)

_CONTINGENCY_WORDS = ("contingenc", "critical", "n-1", "t-1", "n1 ", "reliab",
                      "vulnerab", "security assessment", "outage")
_SOLVE_WORDS = ("solve", "optimize", "optimise", "dispatch", "opf", "run")
_STATUS_WORDS = ("status", "summary", "state of", "what is loaded", "current case")


def _case_from(text: str, ctx: AgentContext) -> str:
    m = _CASE_RE.search(text)
    if m:
        return f"case{m.group(1)}"
    return ctx.source.name


def plan(utterance: str, ctx: AgentContext, registry: ToolRegistry,
         config: Optional[BackendConfig] = None,
         http_client: Optional[httpx.Client] = None) -> Plan:
    """Classify intent and produce a validated tool sequence.

    Deterministic mode uses the rule grammar below; live mode delegates tool
    selection to the chat backend but validates the same way.
    """
    cfg = config or BackendConfig()
    if cfg.mode is BackendMode.LIVE:
        p = _plan_live(utterance, ctx, registry, cfg, http_client)
    else:
        p = _plan_rules(utterance, ctx, registry)
    validate_plan(p, ctx, registry)
    return p


def _plan_rules(utterance: str, ctx: AgentContext, registry: ToolRegistry) -> Plan:
    text = utterance.strip()
    lower = text.lower()
    if not lower:
        raise UnparseableError("Empty request. Ask for a solve, a load change, "
                               "a contingency analysis, or a status summary.")

    has_solve = any(w in lower for w in _SOLVE_WORDS) and _CASE_RE.search(lower)
    has_contingency = any(w in lower for w in _CONTINGENCY_WORDS)
    load_match = _BUS_LOAD_RE.search(lower) or _BUS_LOAD_ALT_RE.search(lower)
    outage_match = _OUTAGE_RE.search(lower)
    wants_status = any(w in lower for w in _STATUS_WORDS)

    # cross-domain sequence: an optimization step followed by contingency work
    if has_solve and has_contingency:
        case = _case_from(lower, ctx)
        steps = [PlanStep(tool_name="solve_acopf_case", args={"case_name": case},
                          rationale="optimal dispatch requested for the case"),
                 PlanStep(tool_name="solve_base_case", args={},
                          rationale="base power flow for the reliability sweep"),
                 PlanStep(tool_name="run_n1_contingency_analysis", args={"scope": "all"},
                          rationale="comprehensive single-outage screening with ranking")]
        return Plan(utterance=utterance, assigned_agent=AgentName.COORDINATOR,
                    steps=steps, confidence=0.9)

    if outage_match and has_contingency or outage_match:
        kind = outage_match.group(1).lower()
        element = int(outage_match.group(2))
        steps = []
        if not (ctx.freshness_check("powerflow").reuse
                and ctx.freshness_check("acopf").reuse):
            steps.append(PlanStep(tool_name="solve_base_case", args={},
                                  rationale="base case required before outage analysis"))
        steps.append(PlanStep(tool_name="analyze_specific_contingency",
                              args={"element": element, "kind": kind},
                              rationale="single-element outage requested"))
        return Plan(utterance=utterance, assigned_agent=AgentName.CONTINGENCY,
                    steps=steps, confidence=0.9)

    if has_contingency:
        steps = []
        if not (ctx.freshness_check("powerflow").reuse
                and ctx.freshness_check("acopf").reuse):
            steps.append(PlanStep(tool_name="solve_base_case", args={},
                                  rationale="base case must be solved and fresh"))
        steps.append(PlanStep(tool_name="run_n1_contingency_analysis",
                              args={"scope": "all"},
                              rationale="screen every single-element outage and rank"))
        return Plan(utterance=utterance, assigned_agent=AgentName.CONTINGENCY,
                    steps=steps, confidence=0.85)

    if load_match:
        bus = int(load_match.group(1))
        p_mw = float(load_match.group(2))
        args: dict[str, Any] = {"bus": bus, "p_mw": p_mw}
        if load_match.group(3):
            args["q_mvar"] = float(load_match.group(3))
        return Plan(utterance=utterance, assigned_agent=AgentName.ACOPF,
                    steps=[PlanStep(tool_name="modify_bus_load", args=args,
                                    rationale="load edit followed by re-dispatch")],
                    confidence=0.95)

    if wants_status:
        tool = ("get_contingency_status"
                if any(w in lower for w in _CONTINGENCY_WORDS) else "get_network_status")
        return Plan(utterance=utterance, assigned_agent=AgentName.ACOPF,
                    steps=[PlanStep(tool_name=tool, args={},
                                    rationale="status summary requested")],
                    confidence=0.95)

    if has_solve:
        case = _case_from(lower, ctx)
        return Plan(utterance=utterance, assigned_agent=AgentName.ACOPF,
                    steps=[PlanStep(tool_name="solve_acopf_case",
                                    args={"case_name": case},
                                    rationale="optimal power flow requested")],
                    confidence=0.95)

    raise UnparseableError(
        "I could not map that request to an analysis. Try a solve ('Solve case14'), "
        "a load edit ('Increase the load for bus <N> to <P> MW'), "
        "'run contingency analysis', or ':status'.")


def validate_plan(p: Plan, ctx: AgentContext, registry: ToolRegistry) -> None:
    """Tools must exist and respect dependency order (base solve before sweep)."""
    known = set(registry.names())
    base_fresh = (ctx.freshness_check("powerflow").reuse
                  and ctx.freshness_check("acopf").reuse)
    seen_base = False
    for step in p.steps:
        if step.tool_name not in known:
            raise PlanInvalidError(f"plan references unknown tool {step.tool_name!r}")
        if step.tool_name == "solve_base_case":
            seen_base = True
        if step.tool_name in ("run_n1_contingency_analysis",
                              "analyze_specific_contingency"):
            if not (seen_base or base_fresh):
                raise PlanInvalidError(
                    f"{step.tool_name} requires a prior solve_base_case "
                    "(or a fresh base artifact)")


# ---------------------------------------------------------------------------
# execution


def execute_plan(p: Plan, ctx: AgentContext, registry: ToolRegistry,
                 metrics=None) -> tuple[Transcript, list[ToolResult]]:
    """Invoke plan steps in order; reflect on validation after each one.

    Failures become transcript turns, never exceptions; the plan halts on the
    first unrecovered failure with a clarification turn.
    """
    transcript = Transcript()
    results: list[ToolResult] = []
    wf = WorkflowState(plan_id=f"plan-{int(time.time() * 1000):x}",
                       steps=[WorkflowStep(description=s.rationale or s.tool_name,
                                           tool_name=s.tool_name) for s in p.steps],
                       created_at=time.time())
    ctx.set_workflow(wf)

    for i, step in enumerate(p.steps):
        wf.steps[i].status = StepStatus.RUNNING
        ctx.set_workflow(wf)
        t0 = time.time()
        result = registry.invoke(step.tool_name, step.args, ctx)
        latency = (time.time() - t0) * 1000
        results.append(result)
        if metrics is not None:
            metrics.record(kind="tool_invocation", duration_ms=latency,
                           outcome="ok" if result.ok else "failed",
                           session_id=ctx.session_id, tool=step.tool_name)
        transcript.turns.append(Turn(
            role="tool",
            content=f"{step.tool_name} -> {'ok' if result.ok else 'failed'}",
            payload_ref=step.tool_name, timestamp=time.time(),
            latency_ms=latency,
            solver_iterations=result.payload.get("iterations")))
        # reflect: inspect the validation outcome before narrating or moving on
        if not result.ok:
            wf.steps[i].status = StepStatus.FAILED
            ctx.set_workflow(wf)
            transcript.turns.append(Turn(
                role="agent",
                content=result.clarification or result.error or "step failed",
                timestamp=time.time()))
            return transcript, results
        wf.steps[i].status = StepStatus.DONE
        wf.steps[i].result_ref = step.tool_name
        ctx.set_workflow(wf)
    return transcript, results


# ---------------------------------------------------------------------------
# narration with numeral provenance


class _Narrator:
    def __init__(self):
        self.entries: list[ProvenanceEntry] = []

    def cite(self, value, field: str, spec: str = "") -> str:
        if isinstance(value, float):
            token = format(value, spec or ".2f")
        else:
            token = format(value, spec) if spec else str(value)
        self.entries.append(ProvenanceEntry(numeral=token, field=field, value=value))
        return token

    def cite_label(self, label: str, field: str) -> str:
        """Register the bus numbers inside a from-to label as provenance."""
        for part in label.replace("-", " ").split():
            self.entries.append(ProvenanceEntry(numeral=part, field=field, value=label))
        return label


def narrate(results: list[ToolResult], ctx: AgentContext,
            plan_obj: Optional[Plan] = None) -> tuple[str, list[ProvenanceEntry]]:
    """Template-driven response; every numeral in the text is registered in the
    returned provenance map."""
    n = _Narrator()
    lines: list[str] = []
    for result in results:
        if not result.ok:
            lines.append(result.clarification or result.error or "A step failed.")
            continue
        p = result.payload
        tool = result.tool_name
        if tool in ("solve_acopf_case", "modify_bus_load"):
            prefix = ""
            if tool == "modify_bus_load":
                prefix = (f"Load at bus {n.cite(p['modified_bus'], 'modify_bus_load.modified_bus')} "
                          f"set to {n.cite(p['new_load_mw'], 'modify_bus_load.new_load_mw', '.1f')} MW; ")
            lines.append(
                prefix
                + f"{p['case_name']} optimal dispatch "
                + (f"converged in {n.cite(p['iterations'], tool + '.iterations')} iterations. "
                   if p.get("solved") else "did not converge. ")
                + f"Generation cost {n.cite(p['objective_cost'], tool + '.objective_cost', ',.2f')} $/h, "
                + f"losses {n.cite(p['losses_mw'], tool + '.losses_mw', '.2f')} MW, "
                + f"voltage range {n.cite(p['min_voltage_pu'], tool + '.min_voltage_pu', '.4f')} to "
                + f"{n.cite(p['max_voltage_pu'], tool + '.max_voltage_pu', '.4f')} p.u., "
                + f"worst branch loading {n.cite(p['max_loading_percent'], tool + '.max_loading_percent', '.1f')}%.")
        elif tool == "solve_base_case":
            lines.append(
                f"Base-case power flow for {p['case_name']} converged in "
                f"{n.cite(p['iterations'], tool + '.iterations')} iterations "
                + ("reusing the stored optimal dispatch" if p.get("reused_acopf_dispatch")
                   else "after a fresh optimal dispatch")
                + f"; losses {n.cite(p['losses_mw'], tool + '.losses_mw', '.2f')} MW, "
                + f"worst loading {n.cite(p['max_loading_percent'], tool + '.max_loading_percent', '.1f')}%.")
        elif tool == "run_n1_contingency_analysis":
            head = (
                f"Screened {n.cite(p['contingency_count'], tool + '.contingency_count')} "
                f"single-element outages on {p['case_name']}: "
                f"{n.cite(p['secure'], tool + '.secure')} secure, "
                f"{n.cite(p['violations'], tool + '.violations')} with violations, "
                f"{n.cite(p['islanding'], tool + '.islanding')} islanding, "
                f"{n.cite(p['diverged'], tool + '.diverged')} diverged. "
                f"Maximum post-contingency overload {n.cite(p['max_overload_percent'], tool + '.max_overload_percent', '.1f')}%.")
            ranks = []
            for item in p.get("top_critical", []):
                base_field = f"{tool}.top_critical[{item['rank'] - 1}]"
                bits = [
                    f"{n.cite(item['rank'], base_field + '.rank')}. "
                    f"{item['kind']} {n.cite_label(item['label'], base_field + '.label')} "
                    f"(index {n.cite(item['element_index'], base_field + '.element_index')}, "
                    f"score {n.cite(item['score'], base_field + '.score', '.2f')})"]
                if item["n_overloads"]:
                    bits.append(
                        f"{n.cite(item['n_overloads'], base_field + '.n_overloads')} overloads, "
                        f"worst {n.cite(item['worst_overload_excess_percent'], base_field + '.worst_overload_excess_percent', '.1f')}% above rating")
                if item["curtailment_mw"]:
                    bits.append(
                        f"{n.cite(item['curtailment_mw'], base_field + '.curtailment_mw', '.1f')} MW curtailed")
                ranks.append(": ".join([bits[0], "; ".join(bits[1:])]) if len(bits) > 1
                             else bits[0])
            if ranks:
                head += " Critical ranking: " + " | ".join(ranks)
            lines.append(head)
        elif tool == "analyze_specific_contingency":
            lines.append(
                f"Outage of {p['kind']} {n.cite_label(p['label'], tool + '.label')} "
                f"(index {n.cite(p['element_index'], tool + '.element_index')}): {p['status']}; "
                f"worst loading {n.cite(p['max_loading_percent'], tool + '.max_loading_percent', '.1f')}%, "
                f"{n.cite(p['overload_count'], tool + '.overload_count')} overloads, "
                f"minimum voltage {n.cite(p['min_voltage_pu'], tool + '.min_voltage_pu', '.4f')} p.u., "
                f"curtailment {n.cite(p['curtailment_mw'], tool + '.curtailment_mw', '.1f')} MW.")
        elif tool == "get_network_status":
            line = (f"Session case {p['case_name']}: "
                    f"{n.cite(p['bus_count'], tool + '.bus_count')} buses, "
                    f"{n.cite(p['generator_count'], tool + '.generator_count')} generators, "
                    f"{n.cite(p['branch_count'], tool + '.branch_count')} branches; "
                    f"total load {n.cite(p['total_load_mw'], tool + '.total_load_mw', '.1f')} MW; "
                    f"{n.cite(p['diff_count'], tool + '.diff_count')} modification(s) recorded.")
            if "objective_cost" in p:
                line += (" Latest dispatch cost "
                         f"{n.cite(p['objective_cost'], tool + '.objective_cost', ',.2f')} $/h"
                         + (" (current)." if p.get("acopf_fresh") else " (stale)."))
            lines.append(line)
        elif tool == "get_contingency_status":
            if p.get("available"):
                lines.append(
                    f"Contingency analysis for {p['case_name']} covers "
                    f"{n.cite(p['contingency_count'], tool + '.contingency_count')} outages "
                    f"({n.cite(p['secure'], tool + '.secure')} secure, "
                    f"{n.cite(p['violations'], tool + '.violations')} violations, "
                    f"{n.cite(p['islanding'], tool + '.islanding')} islanding, "
                    f"{n.cite(p['diverged'], tool + '.diverged')} diverged)"
                    + ("." if p.get("fresh") else "; it is stale after newer modifications."))
            else:
                lines.append("No contingency analysis is stored yet; "
                             "run a sweep to produce one.")
        else:
            lines.append(f"{tool} completed.")
    if not lines:
        lines.append("Nothing to report.")
    return " ".join(lines), n.entries


_NUMERAL_RE = re.compile(r"(?<![\w.])-?\d[\d,]*(?:\.\d+)?(?![\w])")


def extract_numerals(text: str) -> list[str]:
    return _NUMERAL_RE.findall(text)


def resolve_numerals(text: str, entries: list[ProvenanceEntry]) -> list[str]:
    """Numerals in the text with no matching provenance entry (empty = all resolved)."""
    tokens = {e.numeral for e in entries}
    normalized = {t.replace(",", "") for t in tokens}
    orphans = []
    for numeral in extract_numerals(text):
        if numeral in tokens or numeral.replace(",", "") in normalized:
            continue
        orphans.append(numeral)
    return orphans


def check_against_payloads(text: str, results: list[ToolResult]) -> list[str]:
    """Live-mode post-check: every numeral must match some payload field value
    up to display rounding and thousands separators."""
    values: list[float] = []

    def collect(obj):
        if isinstance(obj, bool):
            return
        if isinstance(obj, (int, float)):
            values.append(float(obj))
        elif isinstance(obj, dict):
            for v in obj.values():
                collect(v)
        elif isinstance(obj, list):
            for v in obj:
                collect(v)

    for r in results:
        collect(r.payload)
    orphans = []
    for numeral in extract_numerals(text):
        raw = numeral.replace(",", "")
        try:
            x = float(raw)
        except ValueError:
            orphans.append(numeral)
            continue
        decimals = len(raw.split(".")[1]) if "." in raw else 0
        if not any(abs(round(v, decimals) - x) < 10 ** (-decimals) / 2 + 1e-12
                   for v in values):
            orphans.append(numeral)
    return orphans


# ---------------------------------------------------------------------------
# live chat backend


def chat_backend_step(messages: list[dict], tool_declarations: list[dict],
                      config: BackendConfig,
                      client: Optional[httpx.Client] = None) -> dict[str, Any]:
    """One round of the chat-completions exchange.

    Returns {"type": "tool_call", "name", "arguments"} or
    {"type": "final", "content"} plus raw token usage when reported.
    """
    if config.mode is not BackendMode.LIVE:
        raise BackendError("chat_backend_step requires live mode")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {"model": config.model, "messages": messages,
            "tools": tool_declarations}
    own_client = client is None
    cl = client or httpx.Client(timeout=config.timeout_s)
    try:
        resp = cl.post(config.backend_url.rstrip("/") + "/chat/completions",
                       json=body, headers=headers)
    except httpx.TimeoutException as exc:
        raise BackendError(f"backend timeout: {exc}") from exc
    except httpx.HTTPError as exc:
        raise BackendError(f"backend transport error: {exc}") from exc
    finally:
        if own_client:
            cl.close()
    if resp.status_code != 200:
        raise BackendError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        doc = resp.json()
        choice = doc["choices"][0]["message"]
    except (ValueError, KeyError, IndexError) as exc:
        raise MalformedBackendReply(f"unexpected backend reply shape: {exc}") from exc
    usage = doc.get("usage") or {}
    if choice.get("tool_calls"):
        call = choice["tool_calls"][0]["function"]
        try:
            args = json.loads(call.get("arguments") or "{}")
        except ValueError as exc:
            raise MalformedBackendReply(f"tool arguments are not valid JSON: {exc}") from exc
        if not isinstance(args, dict):
            raise MalformedBackendReply("tool arguments must decode to an object")
        return {"type": "tool_call", "name": call.get("name", ""),
                "arguments": args, "usage": usage}
    return {"type": "final", "content": choice.get("content") or "", "usage": usage}


def _plan_live(utterance: str, ctx: AgentContext, registry: ToolRegistry,
               cfg: BackendConfig, http_client: Optional[httpx.Client] = None) -> Plan:
    """Ask the backend to choose the first tool; shaped into a single-step plan.

    Multi-step live interaction happens in the orchestrator's live turn; this
    covers the validation path shared with deterministic mode.
    """
    action = chat_backend_step(
        [{"role": "system", "content": cfg.system_prompt or PLANNER_PROMPT},
         {"role": "user", "content": utterance}],
        registry.declarations(), cfg, http_client)
    if action["type"] != "tool_call":
        raise UnparseableError(action.get("content") or "backend produced no tool call")
    agent = AgentName.CONTINGENCY if "contingency" in action["name"] or \
        action["name"] == "solve_base_case" else AgentName.ACOPF
    return Plan(utterance=utterance, assigned_agent=agent,
                steps=[PlanStep(tool_name=action["name"], args=action["arguments"],
                                rationale="selected by chat backend")],
                confidence=0.5)


class Orchestrator:
    """Session-facing entry point: one in-flight turn per session."""

    def __init__(self, registry: Optional[ToolRegistry] = None,
                 config: Optional[BackendConfig] = None, metrics=None,
                 http_client: Optional[httpx.Client] = None):
        from .tools import build_default_registry
        self.registry = registry or build_default_registry()
        self.config = config or BackendConfig()
        self.metrics = metrics
        self.http_client = http_client

    def handle_utterance(self, ctx: AgentContext, utterance: str) -> TurnResult:
        t0 = time.time()
        if self.config.mode is BackendMode.LIVE:
            result = self._live_turn(ctx, utterance)
        else:
            result = self._deterministic_turn(ctx, utterance)
        if self.metrics is not None:
            self.metrics.record(kind="turn", duration_ms=(time.time() - t0) * 1000,
                                outcome="ok" if result.ok else "failed",
                                session_id=ctx.session_id)
        return result

    def _deterministic_turn(self, ctx: AgentContext, utterance: str) -> TurnResult:
        try:
            p = plan(utterance, ctx, self.registry, self.config)
        except UnparseableError as exc:
            return TurnResult(response=exc.clarification, ok=False)
        except PlanInvalidError as exc:
            return TurnResult(response=f"I cannot execute that as asked: {exc}", ok=False)
        transcript, results = execute_plan(p, ctx, self.registry, self.metrics)
        text, entries = narrate(results, ctx, p)
        ok = all(r.ok for r in results) and bool(results)
        return TurnResult(response=text, provenance=entries, plan=p,
                          tool_results=results, workflow=ctx.workflow, ok=ok)

    def _live_turn(self, ctx: AgentContext, utterance: str) -> TurnResult:
        from .prompts import DISPATCH_AGENT_PROMPT, RELIABILITY_AGENT_PROMPT
        lower = utterance.lower()
        default_prompt = (RELIABILITY_AGENT_PROMPT
                          if any(w in lower for w in _CONTINGENCY_WORDS)
                          else DISPATCH_AGENT_PROMPT)
        messages = [
            {"role": "system",
             "content": self.config.system_prompt or default_prompt},
            {"role": "user", "content": utterance},
        ]
        decls = self.registry.declarations()
        results: list[ToolResult] = []
        corrective_used = False
        final_text = ""
        for _ in range(self.config.max_tool_rounds):
            t_req = time.time()
            try:
                action = chat_backend_step(messages, decls, self.config,
                                           self.http_client)
                if self.metrics is not None:
                    self.metrics.record(kind="backend_request",
                                        duration_ms=(time.time() - t_req) * 1000,
                                        outcome="ok",
                                        token_usage=action.get("usage") or None)
            except MalformedBackendReply as exc:
                if self.metrics is not None:
                    self.metrics.record(kind="backend_request",
                                        duration_ms=(time.time() - t_req) * 1000,
                                        outcome="malformed")
                if corrective_used:
                    return TurnResult(response=f"Backend failure: {exc}", ok=False)
                corrective_used = True
                messages.append({"role": "system",
                                 "content": f"Your previous reply was malformed ({exc}); "
                                            "answer again."})
                continue
            if action["type"] == "final":
                final_text = action["content"]
                break
            name, args = action["name"], action["arguments"]
            try:
                result = self.registry.invoke(name, args, ctx)
            except (UnknownToolError, ArgsInvalidError) as exc:
                if corrective_used:
                    return TurnResult(response=f"Tool-call failure: {exc}", ok=False)
                corrective_used = True
                messages.append({"role": "tool", "name": name or "unknown",
                                 "content": json.dumps({"error": str(exc)})})
                continue
            results.append(result)
            messages.append({"role": "assistant", "content": None,
                             "tool_calls": [{"id": f"call{len(results)}",
                                             "type": "function",
                                             "function": {"name": name,
                                                          "arguments": json.dumps(args)}}]})
            messages.append({"role": "tool", "name": name,
                             "content": json.dumps(result.payload if result.ok
                                                   else {"error": result.error})})
        # provenance post-check with one regeneration, then template fallback
        if final_text:
            orphans = check_against_payloads(final_text, results)
            if orphans:
                messages.append({"role": "system",
                                 "content": "Your reply cited numbers not present in tool "
                                            f"outputs ({orphans}); answer again using only "
                                            "tool-output values."})
                try:
                    action = chat_backend_step(messages, decls, self.config,
                                               self.http_client)
                    if action["type"] == "final":
                        final_text = action["content"]
                except BackendError:
                    final_text = ""
                if not final_text or check_against_payloads(final_text, results):
                    final_text, entries = narrate(results, ctx)
                    return TurnResult(response=final_text, provenance=entries,
                                      tool_results=results, ok=True)
            text_entries = [ProvenanceEntry(numeral=tok, field="backend.payload_match",
                                            value=tok)
                            for tok in extract_numerals(final_text)]
            return TurnResult(response=final_text, provenance=text_entries,
                              tool_results=results, ok=True)
        text, entries = narrate(results, ctx)
        return TurnResult(response=text, provenance=entries, tool_results=results,
                          ok=all(r.ok for r in results) and bool(results))
