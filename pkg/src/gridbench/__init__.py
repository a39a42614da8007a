"""Conversational power-system analysis workbench.

Deterministic AC power flow, ACOPF and N-1 contingency engines behind a
schema-validated tool registry, driven by a planner/agent layer with a
versioned, provenance-tracked session context.
"""

__version__ = "0.1.0"
