"""Append-only metrics log: one structured record per line."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field


class MetricsEvent(BaseModel):
    kind: str                       # tool_invocation | backend_request | turn
    duration_ms: float
    outcome: str
    session_id: str = ""
    timestamp: float = 0.0
    token_usage: Optional[dict[str, int]] = None
    extra: dict = Field(default_factory=dict)


class MetricsLog:
    """Newline-delimited JSON sink; memory-backed when no path is given."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._events: list[MetricsEvent] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, kind: str, duration_ms: float, outcome: str,
               session_id: str = "", token_usage: Optional[dict[str, int]] = None,
               **extra) -> MetricsEvent:
        if duration_ms < 0:
            duration_ms = 0.0
        event = MetricsEvent(kind=kind, duration_ms=duration_ms, outcome=outcome,
                             session_id=session_id, timestamp=time.time(),
                             token_usage=token_usage, extra=extra)
        with self._lock:
            self._events.append(event)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(event.model_dump_json() + "\n")
        return event

    def events(self, limit: int = 0) -> list[MetricsEvent]:
        with self._lock:
            evs = list(self._events)
        return evs[-limit:] if limit else evs

    @staticmethod
    def read_file(path: str | Path) -> list[MetricsEvent]:
        out = []
        p = Path(path)
        if not p.exists():
            return out
        for line in p.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(MetricsEvent.model_validate_json(line))
        return out
