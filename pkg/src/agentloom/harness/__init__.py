"""CLI harness: config loading, end-to-end runs, transcript emission."""

from .config import (
    AgentConfig,
    BackendConfig,
    CooperationConfig,
    MemoryConfig,
    PlanningConfig,
    ReflectionConfig,
    RoleConfig,
    load_config,
    validate_config,
)
from .runner import RunResult, Transcript, TranscriptEntry, make_clock, run

__all__ = [
    "AgentConfig", "BackendConfig", "CooperationConfig", "MemoryConfig",
    "PlanningConfig", "ReflectionConfig", "RoleConfig", "load_config",
    "validate_config", "run", "RunResult", "Transcript", "TranscriptEntry",
    "make_clock",
]
