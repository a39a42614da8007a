"""Versioned session state shared by all agents.

One ``AgentContext`` holds the baseline case, the chronological digest-chained
diff log, validated artifacts with provenance, the contingency cache, and the
workflow trace.  Mutation is serialized through the context object; every
mutation bumps a monotonically increasing version.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
import time
import uuid
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field

from .caseio import CaseOrigin, CaseSource, load_source, parse_case
from .contingency import ContingencyAnalysisResult, ContingencyCache, ContingencyResult
from .network import (
    Modification,
    PowerSystem,
    apply_modification,
    modification_from_dict,
    modification_to_dict,
    network_from_dict,
    network_to_dict,
)
from .opf import ACOPFSolution
from .powerflow import PowerFlowSolution

SCHEMA_VERSION = 1


class SchemaVersionMismatch(ValueError):
    def __init__(self, found: int, supported: int):
        super().__init__(f"session schema version {found} not supported "
                         f"(this build reads version {supported})")
        self.found = found
        self.supported = supported


class StepStatus(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class WorkflowStep(BaseModel):
    description: str
    tool_name: str
    status: StepStatus = StepStatus.PENDING
    result_ref: Optional[str] = None


class WorkflowState(BaseModel):
    plan_id: str = ""
    steps: list[WorkflowStep] = Field(default_factory=list)
    created_at: float = 0.0


class Provenance(BaseModel):
    tool_name: str
    tool_version: str
    solver_options: dict[str, Any] = Field(default_factory=dict)
    validation_flags: dict[str, Any] = Field(default_factory=dict)
    timestamp: float = 0.0
    context_version: int = 0
    diff_position: int = 0


class Artifact(BaseModel):
    kind: str                      # "acopf" | "powerflow" | "contingency"
    payload: dict[str, Any]
    provenance: Provenance


class FreshnessDecision(BaseModel):
    reuse: bool
    artifact_kind: str
    stale_diffs: list[dict] = Field(default_factory=list)
    advice: str = ""


def chain_digest(previous: str, mod: Modification) -> str:
    return hashlib.sha256(f"{previous}|{mod.canonical()}".encode()).hexdigest()


def cache_key(case_checksum: str, diff_digest: str, outage_kind: str,
              element_index: int) -> str:
    """Composite cache key: case + diff history + outage identity."""
    return f"{case_checksum}|{diff_digest}|{outage_kind}:{element_index}"


class AgentContext:
    """Single-writer session state; readers get immutable snapshots."""

    def __init__(self, source: CaseSource, baseline: PowerSystem,
                 session_id: Optional[str] = None):
        self._lock = threading.RLock()
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.source = source
        self.baseline = baseline
        self.network = baseline
        self.diff_log: list[Modification] = []
        self.diff_digests: list[str] = []
        self.artifacts: dict[str, Artifact] = {}
        self.artifact_history: list[Artifact] = []
        self.contingency_entries: dict[str, dict] = {}
        self.workflow = WorkflowState()
        self.version = 0
        self.created_at = time.time()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_case(cls, name: str, case_dir: Optional[str] = None) -> "AgentContext":
        source = load_source(name, case_dir)
        return cls(source, parse_case(source.raw_text, name=name))

    # -- digests -----------------------------------------------------------

    @property
    def diff_digest(self) -> str:
        return self.diff_digests[-1] if self.diff_digests else "genesis"

    def cache_base_key(self) -> str:
        return f"{self.source.checksum}|{self.diff_digest}"

    def contingency_cache(self) -> ContingencyCache:
        base = self.cache_base_key()
        entries = {
            k: ContingencyResult.model_validate(v)
            for k, v in self.contingency_entries.items()
            if k.startswith(base + "|")
        }
        return ContingencyCache(base, entries)

    def absorb_cache(self, cache: ContingencyCache) -> None:
        with self._lock:
            for k, v in cache.entries.items():
                self.contingency_entries[k] = v.model_dump(mode="json")
            self.version += 1

    # -- mutation ----------------------------------------------------------

    def record_modification(self, mod: Modification) -> PowerSystem:
        """Apply and append one edit; artifacts recorded earlier become stale."""
        with self._lock:
            new_net = apply_modification(self.network, mod)
            self.network = new_net
            self.diff_log.append(mod)
            self.diff_digests.append(chain_digest(self.diff_digests[-1] if self.diff_digests else "genesis", mod))
            self.version += 1
            return new_net

    def store_artifact(self, kind: str, payload: BaseModel,
                       provenance: Provenance) -> str:
        """Append an immutable snapshot; the latest one becomes current but
        older versions stay addressable for audit."""
        with self._lock:
            provenance.diff_position = len(self.diff_log)
            provenance.context_version = self.version
            artifact = Artifact(kind=kind, payload=payload.model_dump(mode="json"),
                                provenance=provenance)
            self.artifacts[kind] = artifact
            self.artifact_history.append(artifact)
            self.version += 1
            return f"{kind}@v{provenance.context_version}"

    def artifact_versions(self, kind: str) -> list[Artifact]:
        """Every stored snapshot of a kind, oldest first."""
        return [a for a in self.artifact_history if a.kind == kind]

    def set_workflow(self, wf: WorkflowState) -> None:
        with self._lock:
            self.workflow = wf
            self.version += 1

    # -- queries -----------------------------------------------------------

    def artifact(self, kind: str) -> Optional[Artifact]:
        return self.artifacts.get(kind)

    def acopf_solution(self) -> Optional[ACOPFSolution]:
        art = self.artifacts.get("acopf")
        return ACOPFSolution.model_validate(art.payload) if art else None

    def powerflow_solution(self) -> Optional[PowerFlowSolution]:
        art = self.artifacts.get("powerflow")
        return PowerFlowSolution.model_validate(art.payload) if art else None

    def contingency_result(self) -> Optional[ContingencyAnalysisResult]:
        art = self.artifacts.get("contingency")
        return ContingencyAnalysisResult.model_validate(art.payload) if art else None

    def freshness_check(self, artifact_kind: str) -> FreshnessDecision:
        """Reuse iff the artifact exists and no diff was recorded after it."""
        art = self.artifacts.get(artifact_kind)
        if art is None:
            return FreshnessDecision(
                reuse=False, artifact_kind=artifact_kind,
                advice=f"no {artifact_kind} artifact yet; run a full solve")
        pos = art.provenance.diff_position
        if pos == len(self.diff_log):
            return FreshnessDecision(reuse=True, artifact_kind=artifact_kind,
                                     advice="artifact is current")
        stale = [modification_to_dict(m) for m in self.diff_log[pos:]]
        return FreshnessDecision(
            reuse=False, artifact_kind=artifact_kind, stale_diffs=stale,
            advice=f"{len(stale)} modification(s) recorded after the artifact; re-solve")

    def summary(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "case": self.source.name,
            "case_checksum": self.source.checksum,
            "version": self.version,
            "diff_count": len(self.diff_log),
            "diff_digest": self.diff_digest,
            "artifacts": {
                kind: {
                    "diff_position": art.provenance.diff_position,
                    "timestamp": art.provenance.timestamp,
                    "fresh": self.freshness_check(kind).reuse,
                }
                for kind, art in self.artifacts.items()
            },
            "workflow": self.workflow.model_dump(mode="json"),
        }

    # -- persistence ---------------------------------------------------------

    def to_document(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "created_at": self.created_at,
            "version": self.version,
            "case": {
                "name": self.source.name,
                "origin": self.source.origin.value,
                "raw_text": self.source.raw_text,
                "checksum": self.source.checksum,
            },
            "baseline": network_to_dict(self.baseline),
            "diff_log": [modification_to_dict(m) for m in self.diff_log],
            "diff_digests": list(self.diff_digests),
            "artifacts": {k: a.model_dump(mode="json") for k, a in self.artifacts.items()},
            "artifact_history": [a.model_dump(mode="json") for a in self.artifact_history],
            "contingency_cache": self.contingency_entries,
            "workflow": self.workflow.model_dump(mode="json"),
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> "AgentContext":
        found = doc.get("schema_version")
        if found != SCHEMA_VERSION:
            raise SchemaVersionMismatch(found, SCHEMA_VERSION)
        source = CaseSource(name=doc["case"]["name"],
                            origin=CaseOrigin(doc["case"]["origin"]),
                            raw_text=doc["case"]["raw_text"],
                            checksum=doc["case"]["checksum"])
        ctx = cls(source, network_from_dict(doc["baseline"]),
                  session_id=doc["session_id"])
        ctx.created_at = doc.get("created_at", ctx.created_at)
        ctx.diff_log = [modification_from_dict(d) for d in doc.get("diff_log", [])]
        ctx.diff_digests = list(doc.get("diff_digests", []))
        net = ctx.baseline
        for mod in ctx.diff_log:
            net = apply_modification(net, mod)
        ctx.network = net
        ctx.artifacts = {k: Artifact.model_validate(a)
                         for k, a in doc.get("artifacts", {}).items()}
        ctx.artifact_history = [Artifact.model_validate(a)
                                for a in doc.get("artifact_history", [])]
        ctx.contingency_entries = dict(doc.get("contingency_cache", {}))
        ctx.workflow = WorkflowState.model_validate(doc.get("workflow", {}))
        ctx.version = doc.get("version", 0)
        return ctx

    def save(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(self.to_document(), indent=1), encoding="utf-8")
        return p

    @classmethod
    def load(cls, path: str | Path) -> "AgentContext":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_document(doc)


def replay_verifies(ctx: AgentContext) -> bool:
    """Replay identity: baseline plus diff log equals the current network."""
    net = ctx.baseline
    for mod in ctx.diff_log:
        net = apply_modification(net, mod)
    return net == ctx.network
