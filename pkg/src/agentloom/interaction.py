"""Goal capture, personas, and prompt/response templating.

Goals arrive two ways: passively from an explicit utterance, or proactively
from a window of structured context events. The proactive path reports its
own confidence in-band (a ``CONFIDENCE: x`` line) and anything below the
threshold comes back wrapped in NeedsConfirmation for a human decision.
"""

from __future__ import annotations

import itertools
import re
import threading
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from . import models
from .errors import (
    EmptyUtterance,
    EmptyWindow,
    FormatError,
    MissingField,
    NoRoles,
    TemplateError,
)


class GoalOrigin(str, Enum):
    PASSIVE = "passive"
    PROACTIVE = "proactive"
    CONFIRMED = "confirmed"


class EventKind(str, Enum):
    CLICK = "click"
    KEYSTROKE_BURST = "keystroke_burst"
    SELECTION = "selection"
    ANNOTATION = "annotation"
    MESSAGE = "message"
    SYSTEM = "system"


@dataclass(frozen=True)
class Persona:
    id: str
    roles: tuple[str, ...]
    communication_style: str = ""
    expertise: tuple[str, ...] = ()
    limitations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("persona id must be non-empty")
        if not self.roles:
            raise NoRoles("persona needs at least one role")


@dataclass(frozen=True)
class Goal:
    objective: str
    sub_intents: tuple[str, ...] = ()
    constraints: tuple[str, ...] = ()
    origin: GoalOrigin = GoalOrigin.PASSIVE
    confidence: float = 1.0
    persona_id: Optional[str] = None

    def __post_init__(self):
        if not self.objective:
            raise ValueError("goal objective must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.origin in (GoalOrigin.PASSIVE, GoalOrigin.CONFIRMED) and self.confidence != 1.0:
            raise ValueError(f"{self.origin.value} goals carry confidence 1.0")


@dataclass(frozen=True)
class NeedsConfirmation:
    """A proactive goal below the confidence threshold, awaiting a human."""

    goal: Goal


def confirm(pending: NeedsConfirmation) -> Goal:
    return replace(pending.goal, origin=GoalOrigin.CONFIRMED, confidence=1.0)


@dataclass(frozen=True)
class ContextEvent:
    kind: EventKind
    payload: str
    timestamp: int  # monotonic milliseconds
    source: str = ""


# --- personas ----------------------------------------------------------------

class PersonaRegistry:
    """Issues unique persona ids; one registry per agent run keeps ids stable."""

    def __init__(self):
        self._counter = itertools.count(1)
        self._lock = threading.Lock()
        self.personas: dict[str, Persona] = {}

    def next_id(self) -> str:
        with self._lock:
            return f"persona-{next(self._counter)}"

    def add(self, persona: Persona) -> Persona:
        if persona.id in self.personas:
            raise ValueError(f"duplicate persona id: {persona.id}")
        self.personas[persona.id] = persona
        return persona


_default_registry = PersonaRegistry()


def create_persona(roles: Sequence[str], communication_style: str = "",
                   expertise: Sequence[str] = (), limitations: Sequence[str] = (),
                   registry: Optional[PersonaRegistry] = None) -> Persona:
    if not roles:
        raise NoRoles("at least one role required")
    registry = registry or _default_registry
    persona = Persona(
        id=registry.next_id(), roles=tuple(roles),
        communication_style=communication_style,
        expertise=tuple(expertise), limitations=tuple(limitations),
    )
    return registry.add(persona)


# --- templates -----------------------------------------------------------------

_PLACEHOLDER = re.compile(r"\{\{|\}\}|\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class ResponseSpec:
    """Ordered (name, line-anchored regex) extraction rules."""

    fields: tuple[tuple[str, str], ...]
    strict: bool = True

    def __post_init__(self):
        names = [name for name, _ in self.fields]
        if len(names) != len(set(names)):
            raise ValueError("response spec field names must be unique")

    @classmethod
    def keyed(cls, *names: str, strict: bool = True) -> "ResponseSpec":
        """Spec for ``NAME: value`` lines, one per field."""
        return cls(tuple((name, rf"^{re.escape(name)}:\s*(.*)$") for name in names),
                   strict=strict)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_fields: tuple[str, ...]
    response_spec: Optional[ResponseSpec] = None

    def __post_init__(self):
        placeholders = {m.group(1) for m in _PLACEHOLDER.finditer(self.body) if m.group(1)}
        declared = set(self.required_fields)
        if len(self.required_fields) != len(declared):
            raise TemplateError(f"{self.id}: duplicate required fields")
        if placeholders - declared:
            raise TemplateError(f"{self.id}: undeclared placeholders {sorted(placeholders - declared)}")
        if declared - placeholders:
            raise TemplateError(f"{self.id}: unused required fields {sorted(declared - placeholders)}")


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Single-pass substitution; ``{{``/``}}`` escape literal braces.

    Binding values are inserted verbatim and never rescanned.
    """
    for name in template.required_fields:
        if name not in bindings:
            raise MissingField(name)

    def substitute(match: re.Match) -> str:
        token = match.group(0)
        if token == "{{":
            return "{"
        if token == "}}":
            return "}"
        return bindings[match.group(1)]

    return _PLACEHOLDER.sub(substitute, template.body)


def parse_response(raw: str, spec: ResponseSpec) -> dict[str, str]:
    """Extract fields in declaration order; strict specs demand every field."""
    lines = raw.splitlines()
    out: dict[str, str] = {}
    for name, pattern in spec.fields:
        compiled = re.compile(pattern)
        for line in lines:
            match = compiled.match(line)
            if match:
                out[name] = match.group(1) if compiled.groups else match.group(0)
                break
        else:
            if spec.strict:
                raise FormatError(name)
    return out


def load_templates(path: str | Path) -> dict[str, PromptTemplate]:
    """Template file format: ``TEMPLATE <id>`` header, optional ``FIELD <name> <pattern>``
    lines directly after it, then the body verbatim until the next header."""
    templates: dict[str, PromptTemplate] = {}
    current_id: Optional[str] = None
    fields: list[tuple[str, str]] = []
    body: list[str] = []
    in_header = False

    def flush():
        if current_id is None:
            return
        spec = ResponseSpec(tuple(fields)) if fields else None
        text = "\n".join(body)
        names = tuple(dict.fromkeys(
            m.group(1) for m in _PLACEHOLDER.finditer(text) if m.group(1)))
        templates[current_id] = PromptTemplate(
            id=current_id, body=text, required_fields=names, response_spec=spec)

    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("TEMPLATE "):
            flush()
            current_id = line[len("TEMPLATE "):].strip()
            fields, body, in_header = [], [], True
        elif in_header and line.startswith("FIELD "):
            _, name, pattern = line.split(" ", 2)
            fields.append((name, pattern))
        elif current_id is not None:
            in_header = False
            body.append(line)
    flush()
    return templates


# --- goal creation -------------------------------------------------------------

SUBINTENT_TEMPLATE = PromptTemplate(
    id="goal-subintents",
    body=("Break the request below into its distinct sub-intents.\n"
          "Reply with one numbered line per sub-intent, like '1. <intent>'.\n"
          "Request: {utterance}"),
    required_fields=("utterance",),
)

WINDOW_TEMPLATE = PromptTemplate(
    id="goal-anticipation",
    body=("Recent activity:\n{events}\n"
          "Anticipate the user's goal from this activity. State the goal, then a\n"
          "final line 'CONFIDENCE: <0..1>' scoring how sure you are."),
    required_fields=("events",),
)

_ENUMERATED = re.compile(r"^\s*\d+\.\s*(.+?)\s*$")
_CONFIDENCE = re.compile(r"^\s*CONFIDENCE:\s*([0-9.]+)\s*$")


def enumerated_items(text: str) -> list[str]:
    return [m.group(1) for line in text.splitlines() if (m := _ENUMERATED.match(line))]


def create_passive_goal(utterance: str, persona: Optional[Persona],
                        fm: models.Backend) -> Goal:
    """Interpret an articulated request; unparseable extraction falls back to
    the verbatim utterance with no sub-intents."""
    objective = utterance.strip()
    if not objective:
        raise EmptyUtterance("utterance is blank")
    prompt = render_prompt(SUBINTENT_TEMPLATE, {"utterance": objective})
    reply = models.ask(fm, prompt)
    # No enumerated lines means the extraction failed; keep the verbatim request.
    sub_intents = tuple(enumerated_items(reply))
    return Goal(objective=objective, sub_intents=sub_intents,
                origin=GoalOrigin.PASSIVE, confidence=1.0,
                persona_id=persona.id if persona else None)


def summarize_window(window: Sequence[ContextEvent]) -> str:
    return "\n".join(f"- [{e.kind.value}] {e.payload}" + (f" ({e.source})" if e.source else "")
                     for e in window)


def create_proactive_goal(window: Sequence[ContextEvent], persona: Optional[Persona],
                          fm: models.Backend, threshold: float = 0.7) -> Goal | NeedsConfirmation:
    """Anticipate a goal from context events.

    The backend must score itself with a ``CONFIDENCE: x`` line; a missing or
    unparsable score fails safe to 0.0, which routes to human confirmation.
    """
    if not window:
        raise EmptyWindow("context window is empty")
    if any(b.timestamp < a.timestamp for a, b in zip(window, window[1:])):
        raise ValueError("event timestamps must be non-decreasing within a window")
    summary = summarize_window(window)
    prompt = render_prompt(WINDOW_TEMPLATE, {"events": summary})
    reply = models.ask(fm, prompt)

    confidence = 0.0
    objective_lines = []
    for line in reply.splitlines():
        match = _CONFIDENCE.match(line)
        if match:
            try:
                confidence = min(1.0, max(0.0, float(match.group(1))))
            except ValueError:
                confidence = 0.0
        elif line.strip():
            objective_lines.append(line.strip())
    objective = " ".join(objective_lines) or summary

    goal = Goal(objective=objective, origin=GoalOrigin.PROACTIVE,
                confidence=confidence,
                persona_id=persona.id if persona else None)
    if confidence < threshold:
        return NeedsConfirmation(goal)
    return goal
