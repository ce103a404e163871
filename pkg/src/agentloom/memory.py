"""Short-term (budgeted) and long-term (append-only) agent memory.

Long-term memory keeps the entire processed history plus distilled
knowledge; context assembly greedily moves records into a budgeted
short-term buffer in priority order: configurations, working context,
retrieved knowledge, then the most recent events.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from . import models
from .errors import BudgetTooSmall, EmptyVictims
from .interaction import Goal, PromptTemplate, render_prompt
from .textutil import overlap_score, token_count


class RecordKind(str, Enum):
    CONFIGURATION = "configuration"
    EVENT = "event"
    WORKING_CONTEXT = "working_context"
    KNOWLEDGE = "knowledge"


@dataclass(frozen=True)
class MemoryRecord:
    id: int
    kind: RecordKind
    content: str
    timestamp: int  # monotonic milliseconds
    tags: frozenset[str] = frozenset()
    token_count: int = field(init=False)

    def __post_init__(self):
        # token_count is always derived from content, never trusted from input
        object.__setattr__(self, "token_count", token_count(self.content))

    def to_line(self) -> str:
        return json.dumps({
            "id": self.id, "kind": self.kind.value, "content": self.content,
            "timestamp": self.timestamp, "tags": sorted(self.tags),
            "token_count": self.token_count,
        }, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_line(cls, line: str) -> "MemoryRecord":
        raw = json.loads(line)
        return cls(id=raw["id"], kind=RecordKind(raw["kind"]), content=raw["content"],
                   timestamp=raw["timestamp"], tags=frozenset(raw.get("tags", [])))


@dataclass
class ShortTermBuffer:
    budget: int
    records: list[MemoryRecord] = field(default_factory=list)

    @property
    def used(self) -> int:
        return sum(rec.token_count for rec in self.records)

    def __post_init__(self):
        if self.used > self.budget:
            raise ValueError("buffer exceeds its token budget")


class LongTermStore:
    """Append-only history; records are never mutated or removed."""

    def __init__(self, clock: Optional[Callable[[], int]] = None):
        self.clock = clock or (lambda: int(time.time() * 1000))
        self._history: list[MemoryRecord] = []

    @property
    def history(self) -> tuple[MemoryRecord, ...]:
        return tuple(self._history)

    @property
    def knowledge(self) -> tuple[MemoryRecord, ...]:
        return tuple(r for r in self._history if r.kind is RecordKind.KNOWLEDGE)

    def __len__(self) -> int:
        return len(self._history)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(rec.to_line() + "\n" for rec in self._history), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, clock: Optional[Callable[[], int]] = None) -> "LongTermStore":
        store = cls(clock=clock)
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                store._history.append(MemoryRecord.from_line(line))
        return store


def append(store: LongTermStore, kind: RecordKind | str, content: str,
           tags: Iterable[str] = ()) -> MemoryRecord:
    # max-based so ids stay strictly increasing across reloaded stores with gaps
    next_id = max((rec.id for rec in store._history), default=0) + 1
    record = MemoryRecord(
        id=next_id,
        kind=RecordKind(kind),
        content=content,
        timestamp=store.clock(),
        tags=frozenset(tags),
    )
    store._history.append(record)
    return record


def retrieve(store: LongTermStore, query: str, k: int) -> list[MemoryRecord]:
    """Top-k records by lexical overlap; zero-score records never surface.

    Ties prefer newer timestamps, then lower ids.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    scored = [(overlap_score(query, rec.content), rec) for rec in store.history]
    matches = [(score, rec) for score, rec in scored if score > 0]
    matches.sort(key=lambda pair: (-pair[0], -pair[1].timestamp, pair[1].id))
    return [rec for _, rec in matches[:k]]


def build_context(budget: int, store: LongTermStore, goal: Goal,
                  configurations: Sequence[MemoryRecord] = (),
                  working: Sequence[MemoryRecord] = (),
                  retrieval_k: int = 4) -> ShortTermBuffer:
    """Greedy budgeted fill: configurations, working context, retrieval on the
    goal objective, then events newest first. Records that would blow the
    budget are skipped (not stopped at); each record id appears at most once.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")

    buffer = ShortTermBuffer(budget=budget)
    remaining = budget
    seen: set[int] = set()

    def take(record: MemoryRecord) -> bool:
        nonlocal remaining
        if record.id in seen or record.token_count > remaining:
            return False
        buffer.records.append(record)
        seen.add(record.id)
        remaining -= record.token_count
        return True

    took_config = False
    for record in configurations:
        took_config = take(record) or took_config
    if configurations and not took_config:
        raise BudgetTooSmall(f"no configuration record fits in {budget} tokens")

    for record in working:
        take(record)
    for record in retrieve(store, goal.objective, retrieval_k):
        take(record)
    events = [r for r in store.history if r.kind is RecordKind.EVENT]
    for record in sorted(events, key=lambda r: (-r.timestamp, -r.id)):
        take(record)
    return buffer


COMPACT_TEMPLATE = PromptTemplate(
    id="memory-compaction",
    body=("Condense the following records into one knowledge note, keeping\n"
          "decisions and outcomes:\n{records}"),
    required_fields=("records",),
)


def compact(store: LongTermStore, victims: Sequence[MemoryRecord],
            fm: models.Backend) -> MemoryRecord:
    """Summarise victims into a knowledge record; history stays append-only,
    so the victims themselves remain untouched."""
    if not victims:
        raise EmptyVictims("nothing to compact")
    prompt = render_prompt(COMPACT_TEMPLATE, {
        "records": "\n".join(f"- {v.content}" for v in victims)})
    summary = models.ask(fm, prompt).strip()
    return append(store, RecordKind.KNOWLEDGE, summary,
                  tags={f"src:{v.id}" for v in victims})
