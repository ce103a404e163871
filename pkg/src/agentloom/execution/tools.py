"""Tool registry, selection, ranking, generation, and guarded execution.

Tools are descriptors referencing pre-registered handlers by id. Generated
tools arrive unbound: a human operator must bind a handler before they can
run; execution refuses them otherwise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .. import models
from ..errors import (
    DuplicateName,
    GuardrailDenied,
    HandlerFailure,
    HandlerUnbound,
    IllegalTransition,
    NoCandidates,
)
from ..interaction import PromptTemplate, ResponseSpec, parse_response, render_prompt
from ..rai import (
    HANDLER_IO,
    AuditLog,
    GuardrailStage,
    StageKind,
    apply_pipeline,
    task_payload,
)
from ..textutil import canonical_json, overlap_score
from .lifecycle import TaskEvent, TaskRecord, TaskStatus, transition

Handler = Callable[[dict[str, str]], str]


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_fields: tuple[str, ...] = ()
    output_fields: tuple[str, ...] = ()
    handler_id: Optional[str] = None
    provenance_ref: Optional[str] = None  # AIBOM component id

    def to_line(self) -> str:
        return json.dumps({
            "name": self.name, "description": self.description,
            "input_fields": list(self.input_fields),
            "output_fields": list(self.output_fields),
            "handler_id": self.handler_id, "provenance_ref": self.provenance_ref,
        }, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_line(cls, line: str) -> "ToolDescriptor":
        raw = json.loads(line)
        return cls(name=raw["name"], description=raw["description"],
                   input_fields=tuple(raw.get("input_fields", [])),
                   output_fields=tuple(raw.get("output_fields", [])),
                   handler_id=raw.get("handler_id"),
                   provenance_ref=raw.get("provenance_ref"))


def descriptor_checksum(tool: ToolDescriptor) -> bytes:
    """Fingerprint checked against the tool's AIBOM record."""
    return hashlib.sha256(tool.to_line().encode("utf-8")).digest()


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, ToolDescriptor] = {}
        self._handlers: dict[str, Handler] = {}

    def add(self, tool: ToolDescriptor) -> ToolDescriptor:
        if tool.name in self._tools:
            raise DuplicateName(tool.name)
        self._tools[tool.name] = tool
        return tool

    def register_handler(self, handler_id: str, handler: Handler) -> None:
        self._handlers[handler_id] = handler

    def has_handler(self, handler_id: str) -> bool:
        return handler_id in self._handlers

    def bind(self, tool_name: str, handler_id: str) -> ToolDescriptor:
        """Operator action attaching a pre-registered handler to a tool."""
        if handler_id not in self._handlers:
            raise HandlerUnbound(f"handler {handler_id} is not registered")
        bound = replace(self._tools[tool_name], handler_id=handler_id)
        self._tools[tool_name] = bound
        return bound

    def resolve(self, tool: ToolDescriptor) -> Handler:
        if tool.handler_id is None:
            raise HandlerUnbound(f"tool {tool.name} has no bound handler")
        try:
            return self._handlers[tool.handler_id]
        except KeyError:
            raise HandlerUnbound(f"handler {tool.handler_id} is not registered") from None

    def get(self, name: str) -> Optional[ToolDescriptor]:
        return self._tools.get(name)

    def tools(self) -> list[ToolDescriptor]:
        return list(self._tools.values())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(tool.to_line() + "\n" for tool in self._tools.values()),
            encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ToolRegistry":
        registry = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                registry.add(ToolDescriptor.from_line(line))
        return registry


def search_registry(registry: ToolRegistry, task_description: str) -> list[ToolDescriptor]:
    """Tools with positive lexical overlap, best first; name breaks ties."""
    scored = [(overlap_score(task_description, tool.description), tool)
              for tool in registry.tools()]
    matches = [(score, tool) for score, tool in scored if score > 0]
    matches.sort(key=lambda pair: (-pair[0], pair[1].name))
    return [tool for _, tool in matches]


RANK_TEMPLATE = PromptTemplate(
    id="tool-ranking",
    body=("Task: {task}\nCandidate tools:\n{candidates}\n"
          "Reply with one tool name per line, best first."),
    required_fields=("task", "candidates"),
)


def _fallback_order(candidates: Sequence[ToolDescriptor],
                    task_description: str) -> list[ToolDescriptor]:
    return sorted(candidates,
                  key=lambda tool: (-overlap_score(task_description, tool.description),
                                    tool.name))


def rank_tools(candidates: Sequence[ToolDescriptor], task_description: str,
               fm: Optional[models.Backend] = None) -> list[ToolDescriptor]:
    """Backend-assisted ranking; unmatched reply lines are ignored and omitted
    candidates keep their relevance-order position at the tail."""
    if not candidates:
        raise NoCandidates("rank_tools needs candidates")
    fallback = _fallback_order(candidates, task_description)
    if fm is None:
        return fallback

    listing = "\n".join(f"{tool.name}: {tool.description}" for tool in candidates)
    reply = models.ask(fm, render_prompt(RANK_TEMPLATE, {
        "task": task_description, "candidates": listing}))
    by_name = {tool.name: tool for tool in candidates}
    ranked: list[ToolDescriptor] = []
    for line in reply.splitlines():
        name = line.strip()
        if name in by_name and by_name[name] not in ranked:
            ranked.append(by_name[name])
    ranked.extend(tool for tool in fallback if tool not in ranked)
    return ranked


GENERATE_TEMPLATE = PromptTemplate(
    id="tool-generation",
    body=("Design a tool for this requirement: {requirement}\n"
          "Reply with exactly these lines:\n"
          "NAME: <identifier>\nDESCRIPTION: <text>\n"
          "INPUTS: <comma-separated field names>\nOUTPUTS: <comma-separated field names>"),
    required_fields=("requirement",),
    response_spec=ResponseSpec.keyed("NAME", "DESCRIPTION", "INPUTS", "OUTPUTS"),
)


def generate_tool(requirement: str, fm: models.Backend) -> ToolDescriptor:
    """Create a descriptor from a natural-language requirement.

    The result is unbound (handler_id None) and cannot execute until an
    operator binds a pre-registered handler.
    """
    if not requirement.strip():
        raise ValueError("requirement must be non-empty")
    reply = models.ask(fm, render_prompt(GENERATE_TEMPLATE, {"requirement": requirement}))
    fields = parse_response(reply, GENERATE_TEMPLATE.response_spec)

    def split(text: str) -> tuple[str, ...]:
        return tuple(part.strip() for part in text.split(",") if part.strip())

    return ToolDescriptor(
        name=fields["NAME"].strip(),
        description=fields["DESCRIPTION"].strip(),
        input_fields=split(fields["INPUTS"]),
        output_fields=split(fields["OUTPUTS"]),
        handler_id=None,
    )


def invoke_tool(tool: ToolDescriptor, inputs: dict[str, str],
                guardrails: Sequence[GuardrailStage], recorder: AuditLog,
                registry: ToolRegistry, task_id: str = "") -> str:
    """Run the execution-stage pipeline over inputs, the handler, then the
    pipeline again over the output, recording every stage decision and the
    handler I/O. Raises GuardrailDenied / HandlerUnbound / HandlerFailure."""
    handler = registry.resolve(tool)  # refuse unbound tools before any side effect

    def observe(stage: GuardrailStage, verdict):
        recorder.record(f"rai.guardrail.{stage.stage_kind.value}", task_payload(
            task_id, "guardrail", stage=stage.name, decision=verdict.decision,
            reason=verdict.reason))

    verdict = apply_pipeline(list(guardrails), inputs, observer=observe)
    if verdict.denied:
        raise GuardrailDenied(verdict.reason)
    checked_inputs = verdict.payload

    recorder.record("execution.handler", task_payload(
        task_id, HANDLER_IO, direction="input", tool=tool.name,
        data=canonical_json(checked_inputs)))
    try:
        output = handler(checked_inputs)
    except Exception as exc:
        raise HandlerFailure(f"{tool.name}: {exc}") from exc
    recorder.record("execution.handler", task_payload(
        task_id, HANDLER_IO, direction="output", tool=tool.name, data=output))

    verdict = apply_pipeline(list(guardrails), output, observer=observe)
    if verdict.denied:
        raise GuardrailDenied(verdict.reason)
    return verdict.payload


def execute_task(record: TaskRecord, tool: ToolDescriptor, inputs: dict[str, str],
                 guardrails: Sequence[GuardrailStage], recorder: AuditLog,
                 registry: ToolRegistry) -> TaskRecord:
    """Execute a running task through its tool; returns the finished record
    (succeeded with result, blocked on denial, failed on handler error)."""
    if record.status is not TaskStatus.RUNNING:
        raise IllegalTransition(record.status.value, "execute")
    for stage in guardrails:
        if stage.stage_kind is not StageKind.EXECUTION:
            raise ValueError("execute_task takes execution-stage guardrails")
    task_id = record.node.id
    try:
        result = invoke_tool(tool, inputs, guardrails, recorder, registry, task_id=task_id)
    except GuardrailDenied as exc:
        return transition(record, TaskEvent.GUARDRAIL_DENY, reason=exc.reason)
    except HandlerFailure:
        return transition(record, TaskEvent.FAIL)
    return transition(record, TaskEvent.SUCCEED, result=result)
