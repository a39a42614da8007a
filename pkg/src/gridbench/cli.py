"""Command-line entry points: one-shot analyses, the conversational REPL, and
the HTTP service."""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path
from typing import Optional

import click
from rich.console import Console
from rich.table import Table

from .caseio import UnknownCaseError
from .metrics import MetricsLog
from .orchestrator import BackendConfig, BackendMode, Orchestrator
from .session import AgentContext

console = Console()


def _backend_config(backend_url: str, model: str) -> BackendConfig:
    if backend_url:
        return BackendConfig(mode=BackendMode.LIVE, backend_url=backend_url,
                             model=model)
    return BackendConfig()


def _emit(payload: dict, fmt: str, table_builder=None) -> None:
    if fmt == "document":
        click.echo(json.dumps(payload, indent=2, default=str))
    elif table_builder is not None:
        table_builder(payload)
    else:
        for k, v in payload.items():
            console.print(f"  [bold]{k}[/bold]: {v}")


@click.group()
def main():
    """Conversational power-system analysis workbench."""


@main.command()
@click.argument("case_name")
@click.option("--format", "fmt", type=click.Choice(["table", "document"]),
              default="table")
@click.option("--case-dir", default=None, help="Directory of case files")
@click.option("--metrics-file", default=None)
def solve(case_name, fmt, case_dir, metrics_file):
    """Solve the AC optimal power flow for CASE_NAME."""
    metrics = MetricsLog(metrics_file)
    orch = Orchestrator(metrics=metrics)
    try:
        ctx = AgentContext.from_case(case_name, case_dir)
    except UnknownCaseError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    result = orch.handle_utterance(ctx, f"solve {case_name}")
    if not result.ok:
        click.echo(result.response, err=True)
        sys.exit(1)
    payload = result.tool_results[-1].payload

    def table_builder(p):
        t = Table(title=f"ACOPF {p['case_name']}")
        t.add_column("field")
        t.add_column("value", justify="right")
        for key in ("solved", "objective_cost", "losses_mw", "min_voltage_pu",
                    "max_voltage_pu", "max_loading_percent", "iterations"):
            t.add_row(key, str(p.get(key)))
        console.print(t)
        console.print(result.response)

    _emit(payload, fmt, table_builder)


@main.command()
@click.argument("case_name")
@click.option("--scope", type=click.Choice(["lines", "transformers", "all"]),
              default="lines")
@click.option("--top", default=5, help="Ranked critical elements to show")
@click.option("--format", "fmt", type=click.Choice(["table", "document"]),
              default="table")
@click.option("--case-dir", default=None)
@click.option("--metrics-file", default=None)
def n1(case_name, scope, top, fmt, case_dir, metrics_file):
    """Run the N-1 contingency sweep for CASE_NAME."""
    metrics = MetricsLog(metrics_file)
    orch = Orchestrator(metrics=metrics)
    try:
        ctx = AgentContext.from_case(case_name, case_dir)
    except UnknownCaseError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    base = orch.registry.invoke("solve_base_case", {"case_name": case_name}, ctx)
    if not base.ok:
        click.echo(f"base case failed: {base.error}", err=True)
        sys.exit(1)
    sweep = orch.registry.invoke("run_n1_contingency_analysis",
                                 {"scope": scope, "top_k": top}, ctx)
    if not sweep.ok:
        click.echo(f"sweep failed: {sweep.error}", err=True)
        sys.exit(1)
    payload = sweep.payload

    def table_builder(p):
        t = Table(title=f"N-1 {p['case_name']} ({p['scope']}): "
                        f"{p['contingency_count']} outages")
        for col in ("rank", "kind", "label", "index", "score", "overloads",
                    "worst excess %", "curtailment MW"):
            t.add_column(col)
        for item in p["top_critical"]:
            t.add_row(str(item["rank"]), item["kind"], item["label"],
                      str(item["element_index"]), f"{item['score']:.2f}",
                      str(item["n_overloads"]),
                      f"{item['worst_overload_excess_percent']:.1f}",
                      f"{item['curtailment_mw']:.1f}")
        console.print(t)
        console.print(f"secure {p['secure']} | violations {p['violations']} | "
                      f"islanding {p['islanding']} | diverged {p['diverged']} | "
                      f"max overload {p['max_overload_percent']}%")

    _emit(payload, fmt, table_builder)


@main.command()
@click.argument("case_name")
@click.argument("element", type=int)
@click.option("--kind", type=click.Choice(["line", "transformer"]), default="line")
@click.option("--format", "fmt", type=click.Choice(["table", "document"]),
              default="table")
@click.option("--case-dir", default=None)
def outage(case_name, element, kind, fmt, case_dir):
    """Analyze the outage of one ELEMENT (solver-order index) in CASE_NAME."""
    orch = Orchestrator()
    try:
        ctx = AgentContext.from_case(case_name, case_dir)
    except UnknownCaseError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    base = orch.registry.invoke("solve_base_case", {"case_name": case_name}, ctx)
    if not base.ok:
        click.echo(f"base case failed: {base.error}", err=True)
        sys.exit(1)
    res = orch.registry.invoke("analyze_specific_contingency",
                               {"element": element, "kind": kind}, ctx)
    if not res.ok:
        click.echo(f"analysis failed: {res.error}", err=True)
        sys.exit(1)
    _emit(res.payload, fmt)


@main.command()
@click.option("--case", "case_name", default="case14", help="Initial case")
@click.option("--case-dir", default=None)
@click.option("--session-dir", default="./sessions")
@click.option("--backend-url", default="", help="Chat backend URL enables live mode")
@click.option("--model", default="", help="Chat backend model name")
@click.option("--metrics-file", default=None)
def chat(case_name, case_dir, session_dir, backend_url, model, metrics_file):
    """Interactive conversational session (REPL)."""
    metrics = MetricsLog(metrics_file)
    orch = Orchestrator(config=_backend_config(backend_url, model), metrics=metrics)
    try:
        ctx = AgentContext.from_case(case_name, case_dir)
    except UnknownCaseError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    console.print(f"[bold]gridbench[/bold] session {ctx.session_id} on {case_name}. "
                  "Meta-commands: :status :save :load <id> :quit")
    while True:
        try:
            line = console.input("[cyan]you>[/cyan] ").strip()
        except (EOFError, KeyboardInterrupt):
            console.print("bye")
            return
        if not line:
            continue
        if line in (":quit", ":q", ":exit"):
            return
        if line == ":status":
            console.print_json(json.dumps(ctx.summary(), default=str))
            continue
        if line == ":save":
            path = Path(session_dir) / f"{ctx.session_id}.json"
            ctx.save(path)
            console.print(f"saved {path}")
            continue
        if line.startswith(":load"):
            parts = line.split()
            if len(parts) != 2:
                console.print("usage: :load <session-id>")
                continue
            path = Path(session_dir) / f"{parts[1]}.json"
            try:
                ctx = AgentContext.load(path)
                console.print(f"loaded session {ctx.session_id} "
                              f"({ctx.source.name}, {len(ctx.diff_log)} diffs)")
            except Exception as exc:
                console.print(f"[red]load failed:[/red] {exc}")
            continue
        result = orch.handle_utterance(ctx, line)
        style = "green" if result.ok else "yellow"
        console.print(f"[{style}]agent>[/{style}] {result.response}")
        solve_payload = next((r.payload for r in result.tool_results
                              if r.tool_name in ("solve_acopf_case", "modify_bus_load")
                              and r.ok), None)
        if solve_payload:
            t = Table(title=f"dispatch summary - {solve_payload['case_name']}")
            t.add_column("field")
            t.add_column("value", justify="right")
            for key in ("objective_cost", "losses_mw", "min_voltage_pu",
                        "max_voltage_pu", "max_loading_percent", "iterations"):
                t.add_row(key, str(solve_payload.get(key)))
            console.print(t)
        sweep_payload = next((r.payload for r in result.tool_results
                              if r.tool_name == "run_n1_contingency_analysis" and r.ok),
                             None)
        if sweep_payload and sweep_payload.get("top_critical"):
            t = Table(title="critical elements")
            for col in ("rank", "kind", "label", "score"):
                t.add_column(col)
            for item in sweep_payload["top_critical"]:
                t.add_row(str(item["rank"]), item["kind"], item["label"],
                          f"{item['score']:.2f}")
            console.print(t)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8400, type=int)
@click.option("--case-dir", default=None)
@click.option("--session-dir", default="./sessions")
@click.option("--backend-url", default="")
@click.option("--model", default="")
@click.option("--metrics-file", default=None)
@click.option("--console-dir", default=None, help="Static directory of the web console")
def serve(host, port, case_dir, session_dir, backend_url, model, metrics_file,
          console_dir):
    """Run the HTTP API (and the web console when --console-dir is given)."""
    import uvicorn

    from .service import create_app
    app = create_app(config=_backend_config(backend_url, model),
                     metrics=MetricsLog(metrics_file), case_dir=case_dir,
                     session_dir=session_dir, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def session():
    """Session file export and import."""


@session.command("export")
@click.argument("session_id")
@click.argument("dest", type=click.Path())
@click.option("--session-dir", default="./sessions")
def session_export(session_id, dest, session_dir):
    src = Path(session_dir) / f"{session_id}.json"
    if not src.exists():
        click.echo(f"no stored session {session_id!r} in {session_dir}", err=True)
        sys.exit(1)
    shutil.copyfile(src, dest)
    click.echo(f"exported {session_id} to {dest}")


@session.command("import")
@click.argument("src", type=click.Path(exists=True))
@click.option("--session-dir", default="./sessions")
def session_import(src, session_dir):
    try:
        ctx = AgentContext.load(src)
    except Exception as exc:
        click.echo(f"invalid session file: {exc}", err=True)
        sys.exit(1)
    dest = Path(session_dir) / f"{ctx.session_id}.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dest)
    click.echo(f"imported session {ctx.session_id} ({ctx.source.name})")


if __name__ == "__main__":
    main()
