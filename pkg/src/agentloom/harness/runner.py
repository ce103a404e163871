"""End-to-end agent runs.

run() drives the full flow: goal creation, context assembly, input
guardrails, planning with optional reflection, then per-task tool
selection/execution (or delegation, or a cooperation protocol), output
guardrails, memory appends, and black-box recording. Every transcript
entry points back at the audit record that evidences it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .. import interaction, memory, models, planning
from ..errors import LoomError, UnresolvedReference
from ..execution import (
    Bid,
    Consensus,
    Message,
    NoConsensus,
    QuorumNotMet,
    RoleAgent,
    TaskEvent,
    TaskRecord,
    Tie,
    ToolRegistry,
    Winner,
    cooperate_auction,
    cooperate_debate,
    cooperate_roles,
    cooperate_voting,
    invoke_tool,
    rank_tools,
    ready_set,
    search_registry,
    transition,
)
from ..execution.tools import descriptor_checksum as tool_checksum
from ..interaction import NeedsConfirmation, Persona, PersonaRegistry
from ..planning import QueryMode, ReflectionSource, TaskStatus
from ..rai import (
    AibomRegistry,
    AuditLog,
    GuardrailStage,
    StageKind,
    apply_pipeline,
    explain,
    task_payload,
    verify_provenance,
)
from ..textutil import overlap_score, token_count
from .config import MAX_DELEGATION_DEPTH, AgentConfig, BackendConfig
from .rules import build_handler, build_rule

GOAL_TASK = "goal"
RUN_TASK = "run"


def make_clock(start: int = 0, step: int = 1) -> Callable[[], int]:
    """Deterministic stepping clock for reproducible runs."""
    state = {"t": start}

    def clock() -> int:
        state["t"] += step
        return state["t"]

    return clock


@dataclass(frozen=True)
class TranscriptEntry:
    kind: str
    component: str
    content: str
    audit_index: int
    task_id: str = ""

    def to_line(self) -> str:
        return json.dumps({
            "kind": self.kind, "component": self.component, "content": self.content,
            "audit_index": self.audit_index, "task_id": self.task_id,
        }, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_line(cls, line: str) -> "TranscriptEntry":
        raw = json.loads(line)
        return cls(kind=raw["kind"], component=raw["component"], content=raw["content"],
                   audit_index=raw["audit_index"], task_id=raw.get("task_id", ""))


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    final_status: str = "completed"

    def of_kind(self, kind: str) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.kind == kind]

    @property
    def final_output(self) -> str:
        outputs = self.of_kind("task_result")
        return outputs[-1].content if outputs else ""

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(e.to_line() + "\n" for e in self.entries), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        transcript = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                transcript.entries.append(TranscriptEntry.from_line(line))
        return transcript


@dataclass
class RunResult:
    transcript: Transcript
    audit: AuditLog
    store: memory.LongTermStore
    plan: Optional[planning.Plan] = None
    records: dict[str, TaskRecord] = field(default_factory=dict)
    backends: dict[str, models.Backend] = field(default_factory=dict)

    @property
    def final_status(self) -> str:
        return self.transcript.final_status

    @property
    def final_output(self) -> str:
        return self.transcript.final_output


class _Recorder:
    """Duck-typed AuditLog view that prefixes component names (delegates)."""

    def __init__(self, log: AuditLog, prefix: str):
        self.log = log
        self.prefix = prefix

    def record(self, component: str, payload: Any):
        return self.log.record(self.prefix + component, payload)


def build_backend(cfg: BackendConfig, base_dir: Path,
                  aibom: Optional[AibomRegistry]) -> models.Backend:
    if cfg.kind == "gateway":
        backend: models.Backend = models.GatewayBackend(
            cfg.base_url, cfg.name, cfg.credentials,
            context_window=cfg.context_window, aibom_component_id=cfg.aibom)
    elif cfg.echo:
        backend = models.ScriptedBackend.echo(
            id=cfg.name, context_window=cfg.context_window, aibom_component_id=cfg.aibom)
    elif cfg.fixtures:
        backend = models.ScriptedBackend.from_file(
            (base_dir / cfg.fixtures).resolve(), id=cfg.name,
            context_window=cfg.context_window, aibom_component_id=cfg.aibom)
    else:
        backend = models.ScriptedBackend(
            [], id=cfg.name, context_window=cfg.context_window, aibom_component_id=cfg.aibom)
    backend.aibom = aibom
    if cfg.checksum:
        backend.checksum = bytes.fromhex(cfg.checksum)
    return backend


class NVersionBackend(models.Backend):
    """Routes reasoning through several backends and masks disagreement."""

    def __init__(self, backends: Sequence[models.Backend]):
        window = min(b.descriptor.context_window for b in backends)
        super().__init__(models.BackendDescriptor(
            id="n-version", kind="scripted", context_window=window))
        self.backends = list(backends)

    def _complete(self, request: models.ModelRequest) -> models.ModelResponse:
        outcome = models.n_version(self.backends, request)
        if isinstance(outcome, models.Disagreement):
            detail = "; ".join(f"{bid}: {text!r}" for bid, text in outcome.answers)
            raise LoomError(f"n-version disagreement: {detail}")
        return models.ModelResponse(text=outcome.text,
                                    prompt_tokens=token_count(request.prompt),
                                    completion_tokens=token_count(outcome.text),
                                    model_id=self.descriptor.id)


class _Agent:
    """One configured agent run; holds the per-run wiring."""

    def __init__(self, config: AgentConfig, *, clock: Callable[[], int],
                 audit: AuditLog, transcript: Transcript, prefix: str, depth: int,
                 confirm: Optional[Callable[[interaction.Goal], bool]],
                 human_feedback: Optional[Callable[[str], str]],
                 extra_handlers: Optional[dict] = None):
        self.config = config
        self.clock = clock
        self.audit = audit
        self.recorder = _Recorder(audit, prefix)
        self.transcript = transcript
        self.prefix = prefix
        self.depth = depth
        self.confirm = confirm
        self.human_feedback = human_feedback

        self.aibom = (AibomRegistry.load(config.resolve_path(config.aibom_file))
                      if config.aibom_file else None)
        self.backends = {b.name: build_backend(b, config.base_dir, self.aibom)
                         for b in config.backends}
        if config.n_version:
            self.primary: models.Backend = NVersionBackend(
                [self.backends[name] for name in config.n_version])
        else:
            self.primary = self.backends[config.backends[0].name]

        self.stages = {kind: [GuardrailStage(name=spec, stage_kind=kind, rule=build_rule(spec))
                              for spec in config.guardrails.get(kind, [])]
                       for kind in StageKind}

        self.registry = ToolRegistry()
        if config.tools_file:
            self.registry = ToolRegistry.load(config.resolve_path(config.tools_file))
        for tool in self.registry.tools():
            if tool.handler_id and not self.registry.has_handler(tool.handler_id):
                handler = build_handler(tool.handler_id)
                if handler is not None:
                    self.registry.register_handler(tool.handler_id, handler)
        for handler_id, handler in (extra_handlers or {}).items():
            self.registry.register_handler(handler_id, handler)

        if config.memory.preload:
            self.store = memory.LongTermStore.load(
                config.resolve_path(config.memory.preload), clock=clock)
        else:
            self.store = memory.LongTermStore(clock=clock)

        self.personas = PersonaRegistry()
        self.persona = interaction.create_persona(
            config.persona_roles, config.persona_style, config.persona_expertise,
            config.persona_limitations, registry=self.personas)
        self.round_robin = 0

    # --- recording helpers -------------------------------------------------

    def emit(self, kind: str, component: str, content: str, task_id: str = "",
             **payload_fields) -> TranscriptEntry:
        payload = task_payload(task_id or kind, kind, text=content, **payload_fields)
        record = self.recorder.record(component, payload)
        entry = TranscriptEntry(kind=kind, component=self.prefix + component,
                                content=content, audit_index=record.index,
                                task_id=task_id)
        self.transcript.entries.append(entry)
        return entry

    def emit_persona(self, task_id: str) -> None:
        payload = task_payload(task_id, "persona",
                               roles=list(self.persona.roles),
                               expertise=list(self.persona.expertise),
                               limitations=list(self.persona.limitations),
                               style=self.persona.communication_style)
        record = self.recorder.record("interaction.persona", payload)
        if task_id == GOAL_TASK:
            self.transcript.entries.append(TranscriptEntry(
                kind="persona", component=self.prefix + "interaction.persona",
                content=f"roles={','.join(self.persona.roles)}",
                audit_index=record.index, task_id=task_id))

    def guarded(self, kind: StageKind, payload, task_id: str):
        """Apply one stage stack, recording every decision; returns the verdict
        plus the audit index of the denying record (if any)."""
        deny_index = {"i": None}

        def observer(stage: GuardrailStage, verdict):
            record = self.recorder.record(
                f"rai.guardrail.{kind.value}",
                task_payload(task_id, "guardrail", stage=stage.name,
                             decision=verdict.decision, reason=verdict.reason))
            if verdict.denied:
                deny_index["i"] = record.index

        verdict = apply_pipeline(self.stages[kind], payload, observer=observer)
        return verdict, deny_index["i"]

    def emit_denial(self, stage_kind: StageKind, reason: str, task_id: str,
                    deny_index: Optional[int]) -> None:
        component = f"rai.guardrail.{stage_kind.value}"
        if deny_index is None:
            record = self.recorder.record(component, task_payload(
                task_id, "guardrail", stage="(pipeline)", decision="deny", reason=reason))
            deny_index = record.index
        self.transcript.entries.append(TranscriptEntry(
            kind="denial", component=self.prefix + component,
            content=reason, audit_index=deny_index, task_id=task_id))

    # --- pipeline phases -----------------------------------------------------

    def create_goal(self, goal_text: str,
                    events: Optional[Sequence[interaction.ContextEvent]]):
        if self.config.goal_creator == "proactive":
            if not events:
                raise UnresolvedReference("events", "proactive goal creation needs context events")
            outcome = interaction.create_proactive_goal(
                events, self.persona, self.primary, self.config.confidence_threshold)
            if isinstance(outcome, NeedsConfirmation):
                decided = self.confirm(outcome.goal) if self.confirm else False
                if not decided:
                    self.emit("goal_declined", "interaction.goal",
                              f"unconfirmed proactive goal: {outcome.goal.objective}",
                              GOAL_TASK, confidence=outcome.goal.confidence)
                    return None
                return interaction.confirm(outcome)
            return outcome
        return interaction.create_passive_goal(goal_text, self.persona, self.primary)

    def assemble_context(self, goal, persona_record) -> memory.ShortTermBuffer:
        buffer = memory.build_context(
            self.config.memory.budget, self.store, goal,
            configurations=[persona_record], working=[],
            retrieval_k=self.config.memory.retrieval_k)
        if self.stages[StageKind.RAG]:
            kept = []
            used = 0
            for record in buffer.records:
                if record.kind in (memory.RecordKind.KNOWLEDGE, memory.RecordKind.EVENT):
                    verdict, deny_index = self.guarded(StageKind.RAG, record.content, GOAL_TASK)
                    if verdict.denied:
                        self.emit_denial(StageKind.RAG, verdict.reason, GOAL_TASK, deny_index)
                        continue
                    if verdict.payload != record.content:
                        record = replace(record, content=verdict.payload)
                # a modify may have grown the record; keep the budget invariant
                if used + record.token_count > buffer.budget:
                    continue
                kept.append(record)
                used += record.token_count
            buffer = memory.ShortTermBuffer(budget=buffer.budget, records=kept)
        self.emit("context", "memory.context",
                  f"{len(buffer.records)} records, {buffer.used} tokens",
                  GOAL_TASK, records=[r.id for r in buffer.records])
        return buffer

    def make_plan(self, goal, context):
        cfg = self.config.planning
        if cfg.mode == "multi_path":
            def scorer(path):
                return overlap_score(goal.objective, " ".join(n.description for n in path))

            tree, best = planning.generate_multi_path(
                goal, context, self.primary, cfg.branching, cfg.depth, scorer)
            self.emit("plan_tree", "planning",
                      f"{len(tree.nodes)} nodes explored, best path {'>'.join(best)}",
                      GOAL_TASK)
            plan = planning.chain_plan(
                [tree.nodes[node_id].description for node_id in best[1:]] or
                [goal.objective])
        else:
            plan = planning.generate_single_path(
                goal, context, self.primary, QueryMode(cfg.querying), cfg.max_steps)

        if self.config.reflection:
            plan = self.reflect_on(plan, goal)
        return plan

    def reflect_on(self, plan, goal):
        cfg = self.config.reflection
        source = ReflectionSource(cfg.source)
        rounds = {"n": 0}
        if source is ReflectionSource.HUMAN:
            def provider(current):
                rounds["n"] += 1
                text = (self.human_feedback("\n".join(planning.plan_to_lines(current)))
                        if self.human_feedback else "approve")
                if text.strip().lower() in ("approve", "approved", ""):
                    return planning.ReflectionFeedback(
                        source, planning.ReflectionVerdict.APPROVED)
                return planning.ReflectionFeedback(
                    source, planning.ReflectionVerdict.REVISE, notes=text)
        else:
            critic = (self.backends[cfg.backend] if cfg.backend else self.primary)
            inner = planning.backend_feedback_provider(critic, source, goal.objective)

            def provider(current):
                rounds["n"] += 1
                return inner(current)

        reflected = planning.reflect(plan, source, provider, self.primary,
                                     max_rounds=cfg.max_rounds, objective=goal.objective)
        self.emit("reflection", "planning.reflect",
                  f"source={source.value} rounds={rounds['n']} "
                  f"approved={not reflected.unapproved}",
                  GOAL_TASK)
        return reflected

    # --- task dispatch -------------------------------------------------------

    def dispatch(self, record: TaskRecord) -> TaskRecord:
        """Run one task (status running); returns the finished record."""
        node = record.node
        verdict, deny_index = self.guarded(StageKind.INTERMEDIATE, node.description, node.id)
        if verdict.denied:
            self.emit_denial(StageKind.INTERMEDIATE, verdict.reason, node.id, deny_index)
            return transition(record, TaskEvent.GUARDRAIL_DENY, reason=verdict.reason)

        cooperation = self.config.cooperation
        try:
            if self.config.agent_role == "coordinator" and self.config.delegates:
                result = self.delegate_task(node)
            elif cooperation and cooperation.mode == "voting":
                result = self.vote_on(node)
            elif cooperation and cooperation.mode == "debate":
                result = self.debate_on(node)
            elif cooperation and cooperation.mode == "roles":
                result = self.role_cooperate(node)
            else:
                result = self.run_tool(node)
        except _TaskBlocked as blocked:
            self.emit_denial(blocked.stage, blocked.reason, node.id, blocked.deny_index)
            return transition(record, TaskEvent.GUARDRAIL_DENY, reason=blocked.reason)
        except LoomError as exc:
            self.emit("error", "execution.monitor", str(exc), node.id)
            return transition(record, TaskEvent.FAIL)

        verdict, deny_index = self.guarded(StageKind.OUTPUT, result, node.id)
        if verdict.denied:
            self.emit_denial(StageKind.OUTPUT, verdict.reason, node.id, deny_index)
            return transition(record, TaskEvent.GUARDRAIL_DENY, reason=verdict.reason)
        result = verdict.payload

        memory.append(self.store, memory.RecordKind.WORKING_CONTEXT,
                      f"{node.id}: {result}", tags={node.id})
        self.emit("task_result", "execution.monitor", result, node.id,
                  description=node.description)
        # a second, explain-friendly record marking the task's final output
        self.recorder.record("execution.monitor",
                             task_payload(node.id, "output", text=result))
        return transition(record, TaskEvent.SUCCEED, result=result)

    def run_tool(self, node) -> str:
        candidates = search_registry(self.registry, node.description)
        if not candidates:
            raise LoomError(f"no registered tool matches task {node.id!r}: {node.description}")
        ranked = rank_tools(candidates, node.description,
                            self.primary if self.config.rank_with_backend else None)
        tool = ranked[0]
        self.recorder.record("execution.selector", task_payload(
            node.id, "rationale",
            text=f"selected tool {tool.name} from {[t.name for t in ranked]}"))

        if tool.provenance_ref is not None:
            registry = self.aibom if self.aibom is not None else AibomRegistry()
            verdict = verify_provenance(registry, tool.provenance_ref, tool_checksum(tool))
            if verdict.denied:
                record = self.recorder.record("rai.provenance", task_payload(
                    node.id, "guardrail", stage="provenance", decision="deny",
                    reason=verdict.reason))
                raise _TaskBlocked(StageKind.EXECUTION, verdict.reason, record.index)

        inputs = {name: node.description for name in (tool.input_fields or ("task",))}
        return invoke_tool(tool, inputs, self.stages[StageKind.EXECUTION],
                           self.recorder, self.registry, task_id=node.id)

    def vote_on(self, node) -> str:
        cooperation = self.config.cooperation

        def proposal(agent_name: str) -> Optional[str]:
            backend = self.backends[agent_name]
            try:
                return models.ask(backend, f"Propose the single best result for: "
                                           f"{node.description}\nReply with the result only.")
            except LoomError:
                return None

        outcome = cooperate_voting(cooperation.agents, proposal, cooperation.quorum)
        if isinstance(outcome, Winner):
            self.emit("cooperation", "execution.voting",
                      f"winner: {outcome.option}", node.id, mode="voting")
            return outcome.option
        if isinstance(outcome, Tie):
            self.emit("cooperation", "execution.voting",
                      f"tie between {sorted(outcome.options)}", node.id, mode="voting")
            raise LoomError(f"vote tied: {sorted(outcome.options)}")
        assert isinstance(outcome, QuorumNotMet)
        self.emit("cooperation", "execution.voting",
                  f"quorum not met: {outcome.votes}/{outcome.quorum}", node.id, mode="voting")
        raise LoomError(f"quorum not met ({outcome.votes}/{outcome.quorum})")

    def debate_on(self, node) -> str:
        cooperation = self.config.cooperation

        def make_agent(name: str):
            backend = self.backends[name]

            def agent(topic: str, previous: Sequence[str]) -> str:
                listing = "\n".join(f"- {answer}" for answer in previous) or "(first round)"
                return models.ask(backend,
                                  f"Debate topic: {topic}\nOther positions:\n{listing}\n"
                                  f"State your answer.")

            return agent

        outcome = cooperate_debate([make_agent(n) for n in cooperation.agents],
                                   node.description, cooperation.max_rounds)
        if isinstance(outcome, Consensus):
            self.emit("cooperation", "execution.debate",
                      f"consensus after {outcome.rounds} round(s): {outcome.answer}",
                      node.id, mode="debate")
            return outcome.answer
        assert isinstance(outcome, NoConsensus)
        self.emit("cooperation", "execution.debate",
                  f"no consensus after {outcome.rounds} rounds", node.id, mode="debate")
        raise LoomError(f"debate unresolved: {list(outcome.answers)}")

    def role_cooperate(self, node) -> str:
        cooperation = self.config.cooperation
        subscriptions = {role.name: role.subscribes for role in self.config.roles}
        agents = []
        for role_cfg in self.config.roles:
            persona = interaction.create_persona(
                [role_cfg.name], role_cfg.style, registry=self.personas)
            backend = self.backends[role_cfg.backend]
            agents.append(RoleAgent(persona=persona,
                                    respond=self._role_responder(role_cfg, persona,
                                                                 backend, node.id)))

        initial = Message(sender="user", tags=frozenset(cooperation.initial_tags),
                          content=node.description)
        bus = cooperate_roles(agents, subscriptions, initial, cooperation.message_cap)
        for message in bus.messages:
            self.emit("message", "execution.roles",
                      f"{message.sender}[{','.join(sorted(message.tags))}]: {message.content}",
                      node.id, sender=message.sender, tags=sorted(message.tags))
            memory.append(self.store, memory.RecordKind.EVENT,
                          f"{message.sender}: {message.content}", tags=message.tags)
        flag = " (message cap exceeded)" if bus.cap_exceeded else ""
        self.emit("cooperation", "execution.roles",
                  f"{len(bus.messages)} messages routed{flag}", node.id, mode="roles",
                  cap_exceeded=bus.cap_exceeded)
        return bus.messages[-1].content

    def _role_responder(self, role_cfg, persona: Persona, backend, task_id: str):
        def respond(message: Message) -> list[Message]:
            prompt = (f"You are {persona.roles[0]}"
                      + (f" ({persona.communication_style})" if persona.communication_style else "")
                      + f".\nIncoming [{','.join(sorted(message.tags))}] from "
                        f"{message.sender}: {message.content}\nProduce your artifact.")
            try:
                reply = models.ask(backend, prompt)
            except LoomError:
                return []
            verdict, deny_index = self.guarded(StageKind.EXECUTION, reply, task_id)
            if verdict.denied:
                self.emit_denial(StageKind.EXECUTION, verdict.reason, task_id, deny_index)
                return []
            return [Message(sender=persona.roles[0], tags=frozenset(role_cfg.emits),
                            content=verdict.payload)]

        return respond

    def delegate_task(self, node) -> str:
        if self.depth >= MAX_DELEGATION_DEPTH:
            raise LoomError(f"delegation depth {MAX_DELEGATION_DEPTH} exceeded")
        delegates = self.config.delegates
        cooperation = self.config.cooperation
        use_auction = (self.config.allocation == "auction"
                       or (cooperation is not None and cooperation.mode == "auction"))
        if use_auction:
            def bid_fn(name: str) -> Bid:
                index = int(name)
                delegate = delegates[index]
                skills = " ".join(delegate.persona_roles + delegate.persona_expertise)
                return Bid(bidder=name, amount=overlap_score(node.description, skills),
                           timestamp=index)

            winner, price = cooperate_auction(node.description,
                                              [str(i) for i in range(len(delegates))], bid_fn)
            chosen = int(winner)
            self.emit("cooperation", "execution.auction",
                      f"task auctioned to delegate {chosen} at {price:.3f}",
                      node.id, mode="auction")
        else:
            chosen = self.round_robin % len(delegates)
            self.round_robin += 1

        delegate_config = delegates[chosen]
        label = f"delegate-{chosen}"
        self.emit("delegation", "harness.coordinator",
                  f"task {node.id} -> {label} ({delegate_config.persona_roles[0]})",
                  node.id, delegate=label)
        sub = run(delegate_config, node.description,
                  clock=self.clock, audit=self.audit, transcript=self.transcript,
                  prefix=f"{self.prefix}{label}/", depth=self.depth + 1,
                  confirm=self.confirm, human_feedback=self.human_feedback)
        if sub.final_status != "completed":
            raise LoomError(f"{label} finished with status {sub.final_status}")
        return sub.final_output

    # --- finale ---------------------------------------------------------------

    def finale(self, plan, records) -> None:
        mode = self.config.finale
        if mode == "summary":
            statuses = {"succeeded": 0, "blocked": 0, "failed": 0}
            outputs = []
            for node_id in sorted(records):
                record = records[node_id]
                if record.status.value in statuses:
                    statuses[record.status.value] += 1
                if record.result is not None:
                    outputs.append(f"{node_id} -> {record.result}")
            by_component: dict[str, int] = {}
            for audit_record in self.audit.records:
                if audit_record.component.startswith(self.prefix):
                    key = audit_record.component[len(self.prefix):]
                    by_component[key] = by_component.get(key, 0) + 1
            components = ", ".join(f"{k} x{v}" for k, v in sorted(by_component.items()))
            summary = (f"tasks: {statuses['succeeded']} succeeded, "
                       f"{statuses['blocked']} blocked, {statuses['failed']} failed; "
                       f"log: {components}; outputs: {'; '.join(outputs) or '(none)'}")
            self.emit("summary", "rai.explainer", summary, RUN_TASK)
        elif mode == "explain" and plan is not None:
            for node_id in plan.ordered_ids():
                if node_id not in records:  # never started (blocked dependency)
                    continue
                try:
                    explanation = explain(self.audit, node_id)
                except LoomError as exc:
                    self.emit("error", "rai.explainer", str(exc), node_id)
                    continue
                self.emit("explanation", "rai.explainer", explanation.render(), node_id)


class _TaskBlocked(Exception):
    """Internal: a non-pipeline check (provenance) blocked the task."""

    def __init__(self, stage: StageKind, reason: str, deny_index: Optional[int]):
        super().__init__(reason)
        self.stage = stage
        self.reason = reason
        self.deny_index = deny_index


def run(config: AgentConfig, goal_text: str, *,
        events: Optional[Sequence[interaction.ContextEvent]] = None,
        confirm: Optional[Callable[[interaction.Goal], bool]] = None,
        human_feedback: Optional[Callable[[str], str]] = None,
        clock: Optional[Callable[[], int]] = None,
        extra_handlers: Optional[dict] = None,
        audit: Optional[AuditLog] = None,
        transcript: Optional[Transcript] = None,
        prefix: str = "", depth: int = 0) -> RunResult:
    """Assemble the configured agent and drive one goal end to end."""
    if clock is None:
        if config.fixed_clock is not None:
            clock = make_clock(config.fixed_clock, config.clock_step)
        else:
            clock = lambda: int(time.time() * 1000)
    audit = audit if audit is not None else AuditLog(node_id=config.node_id, clock=clock)
    transcript = transcript if transcript is not None else Transcript()

    agent = _Agent(config, clock=clock, audit=audit, transcript=transcript,
                   prefix=prefix, depth=depth, confirm=confirm,
                   human_feedback=human_feedback, extra_handlers=extra_handlers)
    result = RunResult(transcript=transcript, audit=audit, store=agent.store,
                       backends=agent.backends)

    agent.emit_persona(GOAL_TASK)
    persona_text = (f"persona: roles={','.join(agent.persona.roles)}; "
                    f"expertise={','.join(agent.persona.expertise)}; "
                    f"limits={','.join(agent.persona.limitations)}")
    persona_record = memory.append(agent.store, memory.RecordKind.CONFIGURATION, persona_text)

    try:
        goal = agent.create_goal(goal_text, events)
    except LoomError as exc:
        agent.emit("error", "interaction.goal", str(exc), GOAL_TASK)
        transcript.final_status = "error"
        agent.finale(None, {})
        return result
    if goal is None:
        transcript.final_status = "declined"
        agent.finale(None, {})
        return result
    agent.emit("goal", "interaction.goal", goal.objective, GOAL_TASK,
               origin=goal.origin.value, confidence=goal.confidence,
               sub_intents=list(goal.sub_intents))
    memory.append(agent.store, memory.RecordKind.EVENT, f"goal: {goal.objective}")

    verdict, deny_index = agent.guarded(StageKind.INPUT, goal.objective, GOAL_TASK)
    if verdict.denied:
        agent.emit_denial(StageKind.INPUT, verdict.reason, GOAL_TASK, deny_index)
        transcript.final_status = "denied"
        agent.finale(None, {})
        return result
    if verdict.payload != goal.objective:
        goal = replace(goal, objective=verdict.payload)

    context = agent.assemble_context(goal, persona_record)

    try:
        plan = agent.make_plan(goal, context)
    except LoomError as exc:
        agent.emit("error", "planning", str(exc), GOAL_TASK)
        transcript.final_status = "error"
        agent.finale(None, {})
        return result
    result.plan = plan
    agent.emit("plan", "planning", "\n".join(planning.plan_to_lines(plan)), GOAL_TASK,
               shape=plan.shape.value, truncated=plan.truncated,
               unapproved=plan.unapproved)
    for node_id in plan.ordered_ids():
        agent.recorder.record("planning", task_payload(
            node_id, "rationale",
            text=f"planned step: {plan.nodes[node_id].description}"))

    records: dict[str, TaskRecord] = {}
    result.records = records
    while True:
        for node_id in ready_set(plan, records):
            records[node_id] = transition(TaskRecord(node=plan.nodes[node_id]),
                                          TaskEvent.DEPS_MET)
        runnable = [node_id for node_id in sorted(records)
                    if records[node_id].status is TaskStatus.READY]
        if not runnable:
            break
        for node_id in runnable:
            record = transition(records[node_id], TaskEvent.START)
            agent.emit_persona(node_id)
            record = agent.dispatch(record)
            if (record.status is TaskStatus.FAILED
                    and record.attempts <= config.max_retries):
                record = transition(record, TaskEvent.RETRY, max_retries=config.max_retries)
            records[node_id] = record

    statuses = {record.status for record in records.values()}
    if TaskStatus.BLOCKED in statuses:
        transcript.final_status = "blocked"
    elif TaskStatus.FAILED in statuses:
        transcript.final_status = "failed"
    else:
        transcript.final_status = "completed"

    agent.finale(plan, records)
    return result
