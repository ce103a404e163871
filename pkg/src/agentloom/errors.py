"""Exception hierarchy for the whole framework.

Every domain failure raises a subclass of LoomError so callers can catch
framework errors without swallowing programming mistakes.
"""

from __future__ import annotations


class LoomError(Exception):
    """Base class for all framework errors."""


# --- interaction ---------------------------------------------------------

class EmptyUtterance(LoomError):
    """Passive goal creation got a blank utterance."""


class EmptyWindow(LoomError):
    """Proactive goal creation got an empty context-event window."""


class NoRoles(LoomError):
    """Persona creation requires at least one role."""


class TemplateError(LoomError):
    """Prompt template body and declared fields disagree."""


class MissingField(LoomError):
    """A required template field has no binding."""

    def __init__(self, field: str):
        super().__init__(f"missing field: {field}")
        self.field = field


class FormatError(LoomError):
    """Strict response parsing could not extract a required field."""

    def __init__(self, field: str):
        super().__init__(f"unparseable field: {field}")
        self.field = field


# --- memory --------------------------------------------------------------

class EmptyVictims(LoomError):
    """Compaction needs at least one record to summarise."""


class BudgetTooSmall(LoomError):
    """No configuration record fits in the context budget."""


# --- planning ------------------------------------------------------------

class UnparseablePlan(LoomError):
    """A one-shot or revision response contained no enumerated steps."""


class UnparseableExpansion(LoomError):
    """A tree expansion response contained no candidate steps."""


class PlanShapeError(LoomError):
    """Plan structure violates its declared shape (cycle, fan-out, ...)."""


# --- execution -----------------------------------------------------------

class IllegalTransition(LoomError):
    """Lifecycle event not legal for the task's current status."""

    def __init__(self, status: str, event: str):
        super().__init__(f"illegal transition: {status} + {event}")
        self.status = status
        self.event = event


class NoCandidates(LoomError):
    """Ranking requires a non-empty candidate list."""


class DuplicateName(LoomError):
    """Registry already holds an entry under this name."""


class HandlerUnbound(LoomError):
    """Tool has no bound handler; generated tools stay inert until bound."""


class HandlerFailure(LoomError):
    """The tool handler raised during execution."""


class GuardrailDenied(LoomError):
    """A guardrail stage denied the payload."""

    def __init__(self, reason: str):
        super().__init__(f"denied: {reason}")
        self.reason = reason


class NoBids(LoomError):
    """Every bidder abstained from the auction."""


# --- rai -----------------------------------------------------------------

class MixedStageKinds(LoomError):
    """A guardrail pipeline mixed stages of different kinds."""


class UnknownTask(LoomError):
    """No audit records exist for the requested task id."""


class ChainCorrupted(LoomError):
    """Audit chain verification failed."""

    def __init__(self, index: int):
        super().__init__(f"audit chain corrupted at record {index}")
        self.index = index


class CycleDetected(LoomError):
    """Registering this entry would create a derivation cycle."""


class UnknownVersion(LoomError):
    """No co-versioning entry for this (component, version) pair."""


class DuplicateComponent(LoomError):
    """AIBOM registry already holds this component id."""


# --- models --------------------------------------------------------------

class ContextWindowExceeded(LoomError):
    """Prompt token count exceeds the backend's context window."""


class ProvenanceDenied(LoomError):
    """Backend or tool provenance could not be verified."""

    def __init__(self, reason: str):
        super().__init__(f"provenance denied: {reason}")
        self.reason = reason


class GatewayError(LoomError):
    """Gateway replied with a non-success status."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"gateway error {status}: {detail}".rstrip(": "))
        self.status = status


class RateLimited(GatewayError):
    """Gateway replied 429."""

    def __init__(self, detail: str = ""):
        super().__init__(429, detail)


class MalformedReply(LoomError):
    """Gateway reply missing choices or message content."""


class ScriptExhausted(LoomError):
    """Scripted backend has no fixture left that applies to the prompt."""


# --- harness -------------------------------------------------------------

class ConfigError(LoomError):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """Config file is syntactically invalid."""

    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class UnresolvedReference(ConfigError):
    """Config references a rule, backend, or section that does not exist."""

    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"unresolved reference: {name}" + (f" ({detail})" if detail else ""))
        self.name = name


class InvalidConfig(ConfigError):
    """Config parsed but violates a structural invariant."""
