"""Persistent agent runtime with a meta-cognitive executive layer.

The package bundles the runtime (event kernel, reflex and deliberate layers,
executive monitor, memory, self and user models, hybrid reward, growth
journal), a deterministic browser sandbox, and a CLI harness.
"""

from .agent import Agent
from .backend import BackendUnavailable, GenerationRequest, GenerationResponse, RemoteBackend, Role, ScriptedBackend
from .harness import RunMetrics, compute_metrics, export_csv, load_csv, run_scenario
from .journal import Journal, JournalEntry, JournalParseError, replay_load
from .kernel import Command, EventBroker, Goal, InvariantViolation, Origin, Tier, Verb, VirtualClock
from .memory import MemoryStore
from .models import SelfModel, UserModel
from .monitor import EmptyFrontier, GoalRejected, MetaDecision, Monitor, SearchBudget, ThoughtTree
from .sandbox import Sandbox, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "BackendUnavailable",
    "Command",
    "EmptyFrontier",
    "EventBroker",
    "GenerationRequest",
    "GenerationResponse",
    "Goal",
    "GoalRejected",
    "InvariantViolation",
    "Journal",
    "JournalEntry",
    "JournalParseError",
    "MemoryStore",
    "MetaDecision",
    "Monitor",
    "Origin",
    "RemoteBackend",
    "Role",
    "RunMetrics",
    "Sandbox",
    "ScriptedBackend",
    "SearchBudget",
    "SelfModel",
    "ThoughtTree",
    "Tier",
    "UserModel",
    "Verb",
    "VirtualClock",
    "compute_metrics",
    "export_csv",
    "load_csv",
    "load_scenario",
    "replay_load",
    "run_scenario",
]
