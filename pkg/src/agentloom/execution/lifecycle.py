"""Task queue monitoring: lifecycle transitions and the ready set.

Lifecycle: pending -> ready -> running -> succeeded | failed | blocked,
with bounded retry from failed back to ready. Transitions are pure; the
monitor owning the records serialises them per task.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Optional

from ..errors import IllegalTransition
from ..planning import Plan, TaskNode, TaskStatus

DEFAULT_MAX_RETRIES = 2


class TaskEvent(str, Enum):
    DEPS_MET = "deps_met"
    START = "start"
    SUCCEED = "succeed"
    FAIL = "fail"
    GUARDRAIL_DENY = "guardrail_deny"
    RETRY = "retry"


@dataclass(frozen=True)
class TaskRecord:
    node: TaskNode
    attempts: int = 0
    result: Optional[str] = None
    denial_reason: Optional[str] = None

    @property
    def status(self) -> TaskStatus:
        return self.node.status


def transition(record: TaskRecord, event: TaskEvent | str, *,
               result: Optional[str] = None, reason: Optional[str] = None,
               max_retries: int = DEFAULT_MAX_RETRIES) -> TaskRecord:
    """Apply one lifecycle event, returning the updated record.

    Attempts count starts; retry is legal only from failed while attempts
    have not exhausted max_retries.
    """
    event = TaskEvent(event)
    status = record.status

    def move(new_status: TaskStatus, **changes) -> TaskRecord:
        return replace(record, node=replace(record.node, status=new_status), **changes)

    if status is TaskStatus.PENDING and event is TaskEvent.DEPS_MET:
        return move(TaskStatus.READY)
    if status is TaskStatus.READY and event is TaskEvent.START:
        return move(TaskStatus.RUNNING, attempts=record.attempts + 1)
    if status is TaskStatus.RUNNING and event is TaskEvent.SUCCEED:
        if result is None:
            raise IllegalTransition(status.value, "succeed without result")
        return move(TaskStatus.SUCCEEDED, result=result)
    if status is TaskStatus.RUNNING and event is TaskEvent.FAIL:
        return move(TaskStatus.FAILED)
    if status is TaskStatus.RUNNING and event is TaskEvent.GUARDRAIL_DENY:
        if not reason:
            raise IllegalTransition(status.value, "guardrail_deny without reason")
        return move(TaskStatus.BLOCKED, denial_reason=reason)
    if status is TaskStatus.FAILED and event is TaskEvent.RETRY:
        if record.attempts > max_retries:
            raise IllegalTransition(status.value, "retry budget exhausted")
        return move(TaskStatus.READY)
    raise IllegalTransition(status.value, event.value)


def ready_set(plan: Plan, records: Mapping[str, TaskRecord]) -> list[str]:
    """Pending nodes whose dependencies have all succeeded, in ascending id order."""

    def status_of(node_id: str) -> TaskStatus:
        record = records.get(node_id)
        return record.status if record else plan.nodes[node_id].status

    ready = []
    for node_id in sorted(plan.nodes):
        if status_of(node_id) is not TaskStatus.PENDING:
            continue
        if all(status_of(dep) is TaskStatus.SUCCEEDED for dep in plan.nodes[node_id].deps):
            ready.append(node_id)
    return ready
