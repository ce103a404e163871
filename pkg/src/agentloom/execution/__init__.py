"""Execution engine: task lifecycle, tool registry, and cooperation protocols."""

from .cooperate import (
    Bid,
    BusTranscript,
    Consensus,
    DebateOutcome,
    Message,
    NoConsensus,
    QuorumNotMet,
    RoleAgent,
    Tie,
    VoteOutcome,
    Winner,
    cooperate_auction,
    cooperate_debate,
    cooperate_roles,
    cooperate_voting,
)
from .lifecycle import (
    DEFAULT_MAX_RETRIES,
    TaskEvent,
    TaskRecord,
    ready_set,
    transition,
)
from .tools import (
    ToolDescriptor,
    ToolRegistry,
    descriptor_checksum,
    execute_task,
    generate_tool,
    invoke_tool,
    rank_tools,
    search_registry,
)

__all__ = [
    "TaskEvent", "TaskRecord", "transition", "ready_set", "DEFAULT_MAX_RETRIES",
    "ToolDescriptor", "ToolRegistry", "descriptor_checksum", "search_registry",
    "rank_tools", "generate_tool", "invoke_tool", "execute_task",
    "Winner", "Tie", "QuorumNotMet", "VoteOutcome", "cooperate_voting",
    "Message", "RoleAgent", "BusTranscript", "cooperate_roles",
    "Bid", "cooperate_auction",
    "Consensus", "NoConsensus", "DebateOutcome", "cooperate_debate",
]
