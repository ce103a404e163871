"""Hash-chained black box recorder and the explanation assembler.

Each record binds (payload, timestamp, node id, component) to the previous
record's hash, so any single-field mutation is detectable at exactly the
first affected index. The log file is line-delimited: one canonical JSON
array per record, fields in fixed order, bit-exact for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from ..errors import ChainCorrupted, UnknownTask
from ..textutil import canonical_json

GENESIS = bytes(32)


def _now_ms() -> int:
    return int(time.time() * 1000)


def chain_hash(prev_hash: bytes, payload: str, timestamp: int, node_id: str, component: str) -> bytes:
    """SHA-256 over prev_hash || payload || decimal timestamp || node_id || component."""
    h = hashlib.sha256()
    h.update(prev_hash)
    h.update(payload.encode("utf-8"))
    h.update(str(timestamp).encode("utf-8"))
    h.update(node_id.encode("utf-8"))
    h.update(component.encode("utf-8"))
    return h.digest()


@dataclass(frozen=True)
class AuditRecord:
    index: int
    timestamp: int
    node_id: str
    component: str
    payload: str
    prev_hash: bytes
    hash: bytes

    def to_line(self) -> str:
        return json.dumps(
            [self.index, self.timestamp, self.node_id, self.component,
             self.payload, self.prev_hash.hex(), self.hash.hex()],
            separators=(",", ":"), ensure_ascii=False,
        )

    @classmethod
    def from_line(cls, line: str) -> "AuditRecord":
        index, timestamp, node_id, component, payload, prev_hex, hash_hex = json.loads(line)
        return cls(index, timestamp, node_id, component, payload,
                   bytes.fromhex(prev_hex), bytes.fromhex(hash_hex))


def canonical_payload(payload: Any) -> str:
    """Strings pass through; anything else becomes canonical JSON."""
    if isinstance(payload, str):
        return payload
    return canonical_json(payload)


class AuditLog:
    """Single-writer append channel; chain order is the serialization order."""

    def __init__(self, node_id: str = "local", clock: Optional[Callable[[], int]] = None):
        self.node_id = node_id
        self.clock = clock or _now_ms
        self.records: list[AuditRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, component: str, payload: Any) -> AuditRecord:
        text = canonical_payload(payload)
        prev = self.records[-1].hash if self.records else GENESIS
        timestamp = self.clock()
        digest = chain_hash(prev, text, timestamp, self.node_id, component)
        rec = AuditRecord(
            index=len(self.records), timestamp=timestamp, node_id=self.node_id,
            component=component, payload=text, prev_hash=prev, hash=digest,
        )
        self.records.append(rec)
        return rec

    def verify(self) -> Optional[int]:
        return verify_chain(self.records)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(rec.to_line() + "\n" for rec in self.records), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, node_id: str = "local") -> "AuditLog":
        log = cls(node_id=node_id)
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                log.records.append(AuditRecord.from_line(line))
        if log.records:
            log.node_id = log.records[-1].node_id
        return log


def verify_chain(records: list[AuditRecord]) -> Optional[int]:
    """Recompute every hash from genesis; return the first bad index, or None if intact."""
    prev = GENESIS
    for i, rec in enumerate(records):
        if rec.index != i or rec.prev_hash != prev:
            return i
        if chain_hash(prev, rec.payload, rec.timestamp, rec.node_id, rec.component) != rec.hash:
            return i
        prev = rec.hash
    return None


# --- explanation assembly --------------------------------------------------
#
# The explainer reads structured payloads the framework writes as JSON
# objects carrying "task_id" and "kind". Kinds:
#   persona    — roles / expertise / limitations snapshot
#   rationale  — why a step exists or what the agent decided
#   guardrail  — one stage decision (decision: allow | modify | deny)
#   handler_io — tool input/output capture
#   output     — a produced result; the last one is the final output

PERSONA = "persona"
RATIONALE = "rationale"
GUARDRAIL = "guardrail"
HANDLER_IO = "handler_io"
OUTPUT = "output"


def task_payload(task_id: str, kind: str, **fields: Any) -> dict:
    """Standard shape for task-scoped audit payloads."""
    return {"task_id": task_id, "kind": kind, **fields}


@dataclass
class Explanation:
    task_id: str
    persona: Optional[dict] = None
    rationales: list[str] = field(default_factory=list)
    interventions: list[str] = field(default_factory=list)
    final_output: Optional[str] = None

    def render(self) -> str:
        lines = [f"explanation for task {self.task_id}"]
        if self.persona:
            lines.append(f"  roles: {', '.join(self.persona.get('roles', []))}")
            lines.append(f"  capabilities: {', '.join(self.persona.get('expertise', []))}")
            lines.append(f"  limitations: {', '.join(self.persona.get('limitations', []))}")
        for text in self.rationales:
            lines.append(f"  rationale: {text}")
        for text in self.interventions:
            lines.append(f"  guardrail: {text}")
        if self.final_output is not None:
            lines.append(f"  final output: {self.final_output}")
        return "\n".join(lines)


def explain(log: AuditLog, task_id: str) -> Explanation:
    """Deterministic assembly of the task's story from the verified chain."""
    bad = log.verify()
    if bad is not None:
        raise ChainCorrupted(bad)

    result = Explanation(task_id=task_id)
    seen = False
    for rec in log.records:
        try:
            payload = json.loads(rec.payload)
        except json.JSONDecodeError:
            continue
        if not isinstance(payload, dict) or payload.get("task_id") != task_id:
            continue
        seen = True
        kind = payload.get("kind")
        if kind == PERSONA:
            result.persona = {
                "roles": payload.get("roles", []),
                "expertise": payload.get("expertise", []),
                "limitations": payload.get("limitations", []),
            }
        elif kind == RATIONALE:
            result.rationales.append(payload.get("text", ""))
        elif kind == GUARDRAIL and payload.get("decision") in ("deny", "modify"):
            result.interventions.append(
                f"{payload.get('stage', '?')} {payload.get('decision')}: {payload.get('reason', '')}")
        elif kind == OUTPUT:
            result.final_output = payload.get("text", "")
    if not seen:
        raise UnknownTask(task_id)
    return result
