"""Plan generation: single-path chains, multi-path trees, consistency sampling,
and reflection loops.

Wire formats are deliberately plain: one-shot plans arrive as enumerated
``N. <step>`` lines, incremental querying emits one step per call and stops
at the exact sentinel line ``DONE``.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from . import models
from .errors import PlanShapeError, UnparseableExpansion, UnparseablePlan
from .interaction import Goal, PromptTemplate, enumerated_items, render_prompt
from .memory import ShortTermBuffer
from .textutil import canonical_answer

DONE_SENTINEL = "DONE"


class TaskStatus(str, Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    BLOCKED = "blocked"


class PlanShape(str, Enum):
    CHAIN = "chain"
    TREE = "tree"
    DAG = "dag"


@dataclass(frozen=True)
class TaskNode:
    id: str
    description: str
    deps: frozenset[str] = frozenset()
    status: TaskStatus = TaskStatus.PENDING

    def __post_init__(self):
        if self.id in self.deps:
            raise PlanShapeError(f"node {self.id} depends on itself")


@dataclass
class Plan:
    nodes: dict[str, TaskNode]
    shape: PlanShape
    truncated: bool = False   # incremental generation hit max_steps
    unapproved: bool = False  # reflection exhausted its rounds without approval

    def __post_init__(self):
        validate_plan(self)

    def ordered_ids(self) -> list[str]:
        """Topological order; insertion order breaks ties."""
        order: list[str] = []
        done: set[str] = set()
        pending = list(self.nodes)
        while pending:
            progressed = False
            for node_id in list(pending):
                if self.nodes[node_id].deps <= done:
                    order.append(node_id)
                    done.add(node_id)
                    pending.remove(node_id)
                    progressed = True
            if not progressed:  # unreachable for validated plans
                raise PlanShapeError("cycle while ordering plan")
        return order


def validate_plan(plan: Plan) -> None:
    nodes = plan.nodes
    for node in nodes.values():
        unknown = node.deps - nodes.keys()
        if unknown:
            raise PlanShapeError(f"node {node.id} depends on unknown nodes {sorted(unknown)}")
    if _has_cycle(nodes):
        raise PlanShapeError("plan contains a cycle")
    if plan.shape is PlanShape.CHAIN:
        _check_chain(nodes)
    elif plan.shape is PlanShape.TREE:
        _check_tree(nodes)


def _has_cycle(nodes: dict[str, TaskNode]) -> bool:
    state: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(node_id: str) -> bool:
        mark = state.get(node_id)
        if mark == 0:
            return True
        if mark == 1:
            return False
        state[node_id] = 0
        for dep in nodes[node_id].deps:
            if visit(dep):
                return True
        state[node_id] = 1
        return False

    return any(visit(node_id) for node_id in nodes)


def _degrees(nodes: dict[str, TaskNode]) -> tuple[dict[str, int], dict[str, int]]:
    in_deg = {node_id: len(node.deps) for node_id, node in nodes.items()}
    out_deg = {node_id: 0 for node_id in nodes}
    for node in nodes.values():
        for dep in node.deps:
            out_deg[dep] += 1
    return in_deg, out_deg


def _check_chain(nodes: dict[str, TaskNode]) -> None:
    if not nodes:
        raise PlanShapeError("chain plan needs at least one node")
    in_deg, out_deg = _degrees(nodes)
    if any(d > 1 for d in in_deg.values()) or any(d > 1 for d in out_deg.values()):
        raise PlanShapeError("chain nodes must have in/out degree <= 1")
    roots = [n for n, d in in_deg.items() if d == 0]
    if len(roots) != 1:
        raise PlanShapeError("chain must form a single connected path")


def _check_tree(nodes: dict[str, TaskNode]) -> None:
    in_deg, _ = _degrees(nodes)
    roots = [n for n, d in in_deg.items() if d == 0]
    if len(roots) != 1:
        raise PlanShapeError("tree must have exactly one root")
    if any(d > 1 for d in in_deg.values()):
        raise PlanShapeError("tree nodes have at most one parent")


def chain_plan(descriptions: Sequence[str], truncated: bool = False) -> Plan:
    nodes: dict[str, TaskNode] = {}
    prev: Optional[str] = None
    for i, description in enumerate(descriptions, start=1):
        node_id = f"t{i}"
        deps = frozenset([prev]) if prev else frozenset()
        nodes[node_id] = TaskNode(id=node_id, description=description, deps=deps)
        prev = node_id
    return Plan(nodes=nodes, shape=PlanShape.CHAIN, truncated=truncated)


# --- serialization -----------------------------------------------------------

_NODE_LINE = re.compile(r"^NODE (\S+) DEPS (\S+) DESC (.*)$")


def plan_to_lines(plan: Plan) -> list[str]:
    """``NODE <id> DEPS <comma-list|-> DESC <text>`` per node, topological order."""
    lines = []
    for node_id in plan.ordered_ids():
        node = plan.nodes[node_id]
        deps = ",".join(sorted(node.deps)) if node.deps else "-"
        lines.append(f"NODE {node.id} DEPS {deps} DESC {node.description}")
    return lines


def plan_from_lines(lines: Sequence[str]) -> Plan:
    nodes: dict[str, TaskNode] = {}
    for line in lines:
        if not line.strip():
            continue
        match = _NODE_LINE.match(line)
        if match is None:
            raise UnparseablePlan(f"bad plan line: {line!r}")
        node_id, deps_text, description = match.groups()
        deps = frozenset() if deps_text == "-" else frozenset(deps_text.split(","))
        nodes[node_id] = TaskNode(id=node_id, description=description, deps=deps)
    if not nodes:
        raise UnparseablePlan("no NODE lines")
    return Plan(nodes=nodes, shape=infer_shape(nodes))


def infer_shape(nodes: dict[str, TaskNode]) -> PlanShape:
    try:
        _check_chain(nodes)
        return PlanShape.CHAIN
    except PlanShapeError:
        pass
    try:
        _check_tree(nodes)
        return PlanShape.TREE
    except PlanShapeError:
        return PlanShape.DAG


# --- generation ----------------------------------------------------------------

ONE_SHOT_TEMPLATE = PromptTemplate(
    id="plan-one-shot",
    body=("Goal: {objective}\nContext:\n{context}\n"
          "Write the full plan as numbered steps, one per line, like '1. <step>'."),
    required_fields=("objective", "context"),
)

INCREMENTAL_TEMPLATE = PromptTemplate(
    id="plan-incremental",
    body=("Goal: {objective}\nContext:\n{context}\nPlan so far:\n{steps}\n"
          "Reply with the single next step, or the line DONE if the plan is complete."),
    required_fields=("objective", "context", "steps"),
)

EXPAND_TEMPLATE = PromptTemplate(
    id="plan-expand",
    body=("Goal: {objective}\nContext:\n{context}\nPath so far:\n{path}\n"
          "Propose up to {width} alternative next steps as numbered lines."),
    required_fields=("objective", "context", "path", "width"),
)

REVISE_TEMPLATE = PromptTemplate(
    id="plan-revise",
    body=("Goal: {objective}\nCurrent plan:\n{plan}\nReviewer notes: {notes}\n"
          "Write the revised plan as numbered steps, one per line, like '1. <step>'."),
    required_fields=("objective", "plan", "notes"),
)


def _context_text(context: Optional[ShortTermBuffer]) -> str:
    if context is None or not context.records:
        return "(none)"
    return "\n".join(f"- {rec.content}" for rec in context.records)


class QueryMode(str, Enum):
    ONE_SHOT = "one_shot"
    INCREMENTAL = "incremental"


def generate_single_path(goal: Goal, context: Optional[ShortTermBuffer],
                         fm: models.Backend, mode: QueryMode | str = QueryMode.ONE_SHOT,
                         max_steps: int = 16) -> Plan:
    """Chain-shaped plan via one backend call (one_shot) or one call per step
    (incremental). Hitting max_steps truncates and flags, never errors."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    mode = QueryMode(mode)
    ctx = _context_text(context)

    if mode is QueryMode.ONE_SHOT:
        reply = models.ask(fm, render_prompt(ONE_SHOT_TEMPLATE, {
            "objective": goal.objective, "context": ctx}))
        steps = enumerated_items(reply)
        if not steps:
            raise UnparseablePlan("one-shot response has no enumerated lines")
        return chain_plan(steps[:max_steps], truncated=len(steps) > max_steps)

    steps = []
    truncated = False
    while True:
        if len(steps) >= max_steps:
            truncated = True
            break
        listed = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, 1)) or "(empty)"
        reply = models.ask(fm, render_prompt(INCREMENTAL_TEMPLATE, {
            "objective": goal.objective, "context": ctx, "steps": listed}))
        first = next((line.strip() for line in reply.splitlines() if line.strip()), "")
        if first == DONE_SENTINEL:
            break
        if not first:
            raise UnparseablePlan("incremental response was empty")
        steps.append(first)
    if not steps:
        raise UnparseablePlan("backend finished before producing any step")
    return chain_plan(steps, truncated=truncated)


def generate_multi_path(goal: Goal, context: Optional[ShortTermBuffer],
                        fm: models.Backend, branching: int, depth: int,
                        scorer: Callable[[list[TaskNode]], float]) -> tuple[Plan, list[str]]:
    """Breadth-limited exhaustive tree expansion with an external scorer.

    One backend call per expanded node; the best path is the root-to-leaf
    path maximising the scorer, leftmost (generation order) on ties.
    """
    if branching < 1 or depth < 1:
        raise ValueError("branching and depth must be >= 1")
    ctx = _context_text(context)

    counter = 0

    def fresh_id() -> str:
        nonlocal counter
        counter += 1
        return f"n{counter}"

    root = TaskNode(id=fresh_id(), description=goal.objective)
    nodes: dict[str, TaskNode] = {root.id: root}
    paths: dict[str, list[TaskNode]] = {root.id: [root]}
    frontier = [root]

    for _ in range(depth):
        next_frontier = []
        for parent in frontier:
            path_text = "\n".join(f"- {n.description}" for n in paths[parent.id])
            reply = models.ask(fm, render_prompt(EXPAND_TEMPLATE, {
                "objective": goal.objective, "context": ctx,
                "path": path_text, "width": str(branching)}))
            candidates = enumerated_items(reply)
            if not candidates:
                raise UnparseableExpansion(f"no candidates while expanding {parent.id}")
            for description in candidates[:branching]:
                child = TaskNode(id=fresh_id(), description=description,
                                 deps=frozenset([parent.id]))
                nodes[child.id] = child
                paths[child.id] = paths[parent.id] + [child]
                next_frontier.append(child)
        frontier = next_frontier

    plan = Plan(nodes=nodes, shape=PlanShape.TREE)
    parents = {dep for node in nodes.values() for dep in node.deps}
    leaves = [node for node in nodes.values() if node.id not in parents]
    # generation order == id counter order; max() keeps the first (leftmost) tie
    best = max(leaves, key=lambda leaf: scorer(paths[leaf.id]))
    return plan, [node.id for node in paths[best.id]]


def self_consistency(question: str, context: Optional[ShortTermBuffer],
                     fm: models.Backend, k: int) -> str:
    """Sample k answers and keep the plurality winner; ties fall to the
    lexicographically smallest canonical answer."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ctx = _context_text(context)
    prompt = f"Context:\n{ctx}\nAnswer concisely: {question}"
    answers = [canonical_answer(models.ask(fm, prompt)) for _ in range(k)]
    tally = Counter(answers)
    top = max(tally.values())
    return min(answer for answer, count in tally.items() if count == top)


# --- reflection ------------------------------------------------------------------

class ReflectionSource(str, Enum):
    SELF = "self"
    CROSS = "cross"
    HUMAN = "human"


class ReflectionVerdict(str, Enum):
    APPROVED = "approved"
    REVISE = "revise"


@dataclass(frozen=True)
class ReflectionFeedback:
    source: ReflectionSource
    verdict: ReflectionVerdict
    notes: str = ""

    def __post_init__(self):
        if self.verdict is ReflectionVerdict.REVISE and not self.notes:
            raise ValueError("revise feedback carries non-empty notes")


FeedbackProvider = Callable[[Plan], ReflectionFeedback]

CRITIQUE_TEMPLATE = PromptTemplate(
    id="plan-critique",
    body=("Goal: {objective}\nReview this plan:\n{plan}\n"
          "Reply APPROVED if it is sound, otherwise REVISE: <what to change>."),
    required_fields=("objective", "plan"),
)


def backend_feedback_provider(fm: models.Backend, source: ReflectionSource,
                              objective: str = "") -> FeedbackProvider:
    """Critique via a backend: the plan's own model for self-reflection, a
    different model or agent for cross-reflection."""

    def provider(plan: Plan) -> ReflectionFeedback:
        reply = models.ask(fm, render_prompt(CRITIQUE_TEMPLATE, {
            "objective": objective, "plan": "\n".join(plan_to_lines(plan))}))
        first = next((line.strip() for line in reply.splitlines() if line.strip()), "")
        if first.upper() == "APPROVED":
            return ReflectionFeedback(source=source, verdict=ReflectionVerdict.APPROVED)
        notes = first[len("REVISE:"):].strip() if first.upper().startswith("REVISE:") else reply.strip()
        return ReflectionFeedback(source=source, verdict=ReflectionVerdict.REVISE,
                                  notes=notes or "unspecified concerns")

    return provider


def reflect(plan: Plan, source: ReflectionSource | str, provider: FeedbackProvider,
            fm: models.Backend, max_rounds: int = 3,
            objective: str = "") -> Plan:
    """Feedback/revision loop; an unapproved plan after max_rounds is returned
    flagged rather than discarded."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    ReflectionSource(source)  # validated; the provider itself knows its identity
    current = plan
    for _ in range(max_rounds):
        feedback = provider(current)
        if feedback.verdict is ReflectionVerdict.APPROVED:
            return current
        reply = models.ask(fm, render_prompt(REVISE_TEMPLATE, {
            "objective": objective,
            "plan": "\n".join(plan_to_lines(current)),
            "notes": feedback.notes}))
        steps = enumerated_items(reply)
        if not steps:
            raise UnparseablePlan("revision response has no enumerated lines")
        current = chain_plan(steps)
    return replace_flag(current, unapproved=True)


def replace_flag(plan: Plan, *, truncated: Optional[bool] = None,
                 unapproved: Optional[bool] = None) -> Plan:
    updated = Plan(nodes=dict(plan.nodes), shape=plan.shape,
                   truncated=plan.truncated if truncated is None else truncated,
                   unapproved=plan.unapproved if unapproved is None else unapproved)
    return updated
