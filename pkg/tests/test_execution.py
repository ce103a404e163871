"""Execution engine: lifecycle safety, registry search/ranking, guarded
execution, and the three cooperation protocols."""

import random

import pytest

from agentloom.errors import (
    DuplicateName,
    FormatError,
    GuardrailDenied,
    HandlerFailure,
    HandlerUnbound,
    IllegalTransition,
    NoBids,
    NoCandidates,
)
from agentloom.execution import (
    Bid,
    Consensus,
    Message,
    NoConsensus,
    QuorumNotMet,
    RoleAgent,
    TaskEvent,
    TaskRecord,
    Tie,
    ToolDescriptor,
    ToolRegistry,
    Winner,
    cooperate_auction,
    cooperate_debate,
    cooperate_roles,
    cooperate_voting,
    execute_task,
    generate_tool,
    invoke_tool,
    rank_tools,
    ready_set,
    search_registry,
    transition,
)
from agentloom.interaction import Persona
from agentloom.models import ScriptedBackend
from agentloom.planning import Plan, PlanShape, TaskNode, TaskStatus, chain_plan
from agentloom.rai import AuditLog, GuardrailStage, StageKind, allow, deny, modify


def fresh(status=TaskStatus.PENDING, attempts=0):
    return TaskRecord(node=TaskNode("t1", "do work", status=status), attempts=attempts)


# --- lifecycle -------------------------------------------------------------

class TestTransition:
    def test_deps_met(self):
        assert transition(fresh(), TaskEvent.DEPS_MET).status is TaskStatus.READY

    def test_succeed_requires_running(self):
        with pytest.raises(IllegalTransition):
            transition(fresh(TaskStatus.READY), TaskEvent.SUCCEED, result="r")

    def test_retry_keeps_attempts_until_next_start(self):
        # Hand-walk: failed @1 attempt, retry allowed under max_retries=2,
        # attempts unchanged until the subsequent start.
        rec = fresh(TaskStatus.FAILED, attempts=1)
        rec = transition(rec, TaskEvent.RETRY, max_retries=2)
        assert rec.status is TaskStatus.READY
        assert rec.attempts == 1
        rec = transition(rec, TaskEvent.START)
        assert rec.attempts == 2

    def test_retry_budget_exhausted(self):
        rec = fresh(TaskStatus.FAILED, attempts=3)
        with pytest.raises(IllegalTransition):
            transition(rec, TaskEvent.RETRY, max_retries=2)

    def test_succeed_sets_result_deny_sets_reason(self):
        rec = transition(fresh(TaskStatus.RUNNING), TaskEvent.SUCCEED, result="out")
        assert rec.result == "out" and rec.status is TaskStatus.SUCCEEDED
        rec = transition(fresh(TaskStatus.RUNNING), TaskEvent.GUARDRAIL_DENY, reason="nope")
        assert rec.denial_reason == "nope" and rec.status is TaskStatus.BLOCKED


LIFECYCLE_TABLE = {
    (TaskStatus.PENDING, TaskEvent.DEPS_MET): TaskStatus.READY,
    (TaskStatus.READY, TaskEvent.START): TaskStatus.RUNNING,
    (TaskStatus.RUNNING, TaskEvent.SUCCEED): TaskStatus.SUCCEEDED,
    (TaskStatus.RUNNING, TaskEvent.FAIL): TaskStatus.FAILED,
    (TaskStatus.RUNNING, TaskEvent.GUARDRAIL_DENY): TaskStatus.BLOCKED,
    (TaskStatus.FAILED, TaskEvent.RETRY): TaskStatus.READY,
}


def test_lifecycle_fuzz_against_table_oracle():
    rng = random.Random(31)
    max_retries = 2
    for _ in range(500):
        record = fresh()
        for _ in range(rng.randint(1, 12)):
            event = rng.choice(list(TaskEvent))
            expected = LIFECYCLE_TABLE.get((record.status, event))
            if event is TaskEvent.RETRY and record.attempts > max_retries:
                expected = None
            try:
                after = transition(record, event, result="r", reason="why",
                                   max_retries=max_retries)
            except IllegalTransition:
                assert expected is None
                continue
            assert expected is not None
            assert after.status is expected
            assert after.attempts == record.attempts + (1 if event is TaskEvent.START else 0)
            assert after.attempts <= max_retries + 1
            assert (after.result is not None) == (after.status is TaskStatus.SUCCEEDED)
            assert (after.denial_reason is not None) == (after.status is TaskStatus.BLOCKED)
            record = after


# --- ready_set ---------------------------------------------------------------

def records_for(plan, statuses):
    return {
        node_id: TaskRecord(node=TaskNode(node_id, node.description, node.deps,
                                          statuses.get(node_id, TaskStatus.PENDING)))
        for node_id, node in plan.nodes.items()
    }


class TestReadySet:
    def test_chain(self):
        plan = chain_plan(["a", "b", "c"])
        records = records_for(plan, {"t1": TaskStatus.SUCCEEDED})
        assert ready_set(plan, records) == ["t2"]

    def test_all_succeeded_is_fixpoint(self):
        plan = chain_plan(["a", "b"])
        records = records_for(plan, {"t1": TaskStatus.SUCCEEDED, "t2": TaskStatus.SUCCEEDED})
        assert ready_set(plan, records) == []

    def test_diamond(self):
        nodes = {
            "a": TaskNode("a", "root"),
            "b": TaskNode("b", "left", frozenset({"a"})),
            "c": TaskNode("c", "right", frozenset({"a"})),
            "d": TaskNode("d", "join", frozenset({"b", "c"})),
        }
        plan = Plan(nodes=nodes, shape=PlanShape.DAG)
        records = records_for(plan, {"a": TaskStatus.SUCCEEDED})
        assert ready_set(plan, records) == ["b", "c"]

    def test_matches_dependency_closure_oracle_on_random_dags(self):
        rng = random.Random(13)
        for _ in range(300):
            n = rng.randint(1, 20)
            ids = [f"n{i:02d}" for i in range(n)]
            nodes = {}
            for i, node_id in enumerate(ids):
                deps = frozenset(rng.sample(ids[:i], k=rng.randint(0, min(3, i))))
                nodes[node_id] = TaskNode(node_id, f"job {i}", deps)
            plan = Plan(nodes=nodes, shape=PlanShape.DAG)
            statuses = {node_id: rng.choice(list(TaskStatus)) for node_id in ids}
            records = records_for(plan, statuses)
            oracle = sorted(
                node_id for node_id in ids
                if statuses[node_id] is TaskStatus.PENDING
                and all(statuses[dep] is TaskStatus.SUCCEEDED for dep in nodes[node_id].deps))
            assert ready_set(plan, records) == oracle


# --- registry: search, rank, generate -----------------------------------------

def registry_with(*pairs):
    registry = ToolRegistry()
    for name, description in pairs:
        registry.add(ToolDescriptor(name=name, description=description, handler_id="h"))
    return registry


class TestSearchRegistry:
    def test_example(self):
        registry = registry_with(("image_classifier", "classify images"),
                                 ("summarizer", "summarize text"))
        found = search_registry(registry, "classify the image")
        assert [t.name for t in found] == ["image_classifier"]

    def test_empty_registry(self):
        assert search_registry(ToolRegistry(), "anything") == []

    def test_equal_scores_tie_lexicographically(self):
        registry = registry_with(("zeta", "parse logs"), ("alpha", "parse logs"))
        found = search_registry(registry, "parse")
        assert [t.name for t in found] == ["alpha", "zeta"]

    def test_duplicate_name_rejected(self):
        registry = registry_with(("a", "x"))
        with pytest.raises(DuplicateName):
            registry.add(ToolDescriptor(name="a", description="y"))


class TestRankTools:
    def setup_method(self):
        # Descriptions share nothing with the task, so fallback order is by name.
        self.candidates = [ToolDescriptor(n, "irrelevant description") for n in ("a", "b", "c")]

    def test_backend_order_adopted(self):
        fm = ScriptedBackend.sequential("c\na\nb")
        assert [t.name for t in rank_tools(self.candidates, "task", fm)] == ["c", "a", "b"]

    def test_unmatched_lines_ignored_omissions_appended(self):
        fm = ScriptedBackend.sequential("c\nnonexistent")
        assert [t.name for t in rank_tools(self.candidates, "task", fm)] == ["c", "a", "b"]

    def test_no_backend_uses_fallback(self):
        assert [t.name for t in rank_tools(self.candidates, "task", None)] == ["a", "b", "c"]

    def test_fallback_prefers_relevant_descriptions(self):
        cands = [ToolDescriptor("z", "resize the image"),
                 ToolDescriptor("m", "classify the image precisely")]
        ranked = rank_tools(cands, "classify image", None)
        assert [t.name for t in ranked] == ["m", "z"]

    def test_no_candidates(self):
        with pytest.raises(NoCandidates):
            rank_tools([], "task", None)


class TestGenerateTool:
    def test_valid_fields(self):
        fm = ScriptedBackend.sequential(
            "NAME: csv_parser\nDESCRIPTION: parse csv rows\nINPUTS: path, delimiter\nOUTPUTS: rows")
        tool = generate_tool("parse csv files", fm)
        assert tool.name == "csv_parser"
        assert tool.input_fields == ("path", "delimiter")
        assert tool.output_fields == ("rows",)
        assert tool.handler_id is None

    def test_prose_reply_fails(self):
        fm = ScriptedBackend.sequential("sure, here's an idea for a tool")
        with pytest.raises(FormatError):
            generate_tool("parse csv files", fm)

    def test_unbound_tool_cannot_execute(self):
        registry = ToolRegistry()
        tool = registry.add(ToolDescriptor("unbound", "does nothing yet"))
        with pytest.raises(HandlerUnbound):
            invoke_tool(tool, {"x": "1"}, [], AuditLog(), registry)

    def test_bind_then_execute(self):
        registry = ToolRegistry()
        registry.add(ToolDescriptor("t", "echo"))
        registry.register_handler("echo", lambda inputs: inputs["text"])
        tool = registry.bind("t", "echo")
        assert invoke_tool(tool, {"text": "hi"}, [], AuditLog(), registry) == "hi"


# --- execute_task ---------------------------------------------------------------

def exec_stage(name, rule):
    return GuardrailStage(name=name, stage_kind=StageKind.EXECUTION, rule=rule)


def echo_registry():
    registry = ToolRegistry()
    registry.register_handler("echo", lambda inputs: inputs["text"])
    tool = registry.add(ToolDescriptor("echo_tool", "echo the input", handler_id="echo"))
    return registry, tool


def running_record():
    return TaskRecord(node=TaskNode("t1", "do work", status=TaskStatus.RUNNING), attempts=1)


class TestExecuteTask:
    def test_identity_pipeline(self):
        registry, tool = echo_registry()
        rec = execute_task(running_record(), tool, {"text": "payload"}, [], AuditLog(), registry)
        assert rec.status is TaskStatus.SUCCEEDED
        assert rec.result == "payload"

    def test_output_denial_blocks_task(self):
        registry = ToolRegistry()
        registry.register_handler("leak", lambda inputs: "SECRET x")
        tool = registry.add(ToolDescriptor("leaky", "leaks", handler_id="leak"))
        stage = exec_stage("no-secrets", lambda p: deny("secret detected")
                           if isinstance(p, str) and "SECRET" in p else allow(p))
        rec = execute_task(running_record(), tool, {"text": "go"}, [stage], AuditLog(), registry)
        assert rec.status is TaskStatus.BLOCKED
        assert rec.denial_reason == "secret detected"

    def test_input_denial_never_invokes_handler(self):
        registry = ToolRegistry()
        invoked = []
        registry.register_handler("spy", lambda inputs: invoked.append(1) or "out")
        tool = registry.add(ToolDescriptor("spy_tool", "spies", handler_id="spy"))
        stage = exec_stage("deny-all", lambda p: deny("blocked"))
        rec = execute_task(running_record(), tool, {"x": "1"}, [stage], AuditLog(), registry)
        assert rec.status is TaskStatus.BLOCKED
        assert invoked == []

    def test_handler_failure_fails_task(self):
        registry = ToolRegistry()

        def boom(inputs):
            raise RuntimeError("kaput")

        registry.register_handler("boom", boom)
        tool = registry.add(ToolDescriptor("boomer", "explodes", handler_id="boom"))
        rec = execute_task(running_record(), tool, {}, [], AuditLog(), registry)
        assert rec.status is TaskStatus.FAILED

    def test_requires_running_status(self):
        registry, tool = echo_registry()
        with pytest.raises(IllegalTransition):
            execute_task(fresh(TaskStatus.READY), tool, {}, [], AuditLog(), registry)

    def test_io_and_stage_decisions_recorded(self):
        registry, tool = echo_registry()
        log = AuditLog()
        stage = exec_stage("upper", lambda p: modify(p.upper()) if isinstance(p, str) else allow(p))
        execute_task(running_record(), tool, {"text": "hi"}, [stage], log, registry)
        components = [rec.component for rec in log.records]
        assert components.count("execution.handler") == 2
        assert "rai.guardrail.execution" in components


# --- cooperation ------------------------------------------------------------------

class TestVoting:
    def test_plurality(self):
        votes = {"a1": "A", "a2": "A", "a3": "B"}
        out = cooperate_voting(list(votes), votes.get, quorum=3)
        assert out == Winner(option="a")

    def test_quorum_not_met(self):
        votes = {"a1": "A", "a2": "B"}
        out = cooperate_voting(list(votes), votes.get, quorum=3)
        assert isinstance(out, QuorumNotMet)

    def test_tie(self):
        votes = {"a1": "A", "a2": "A", "a3": "B", "a4": "B"}
        out = cooperate_voting(list(votes), votes.get, quorum=4)
        assert out == Tie(options=frozenset({"a", "b"}))

    def test_abstention_is_no_vote(self):
        votes = {"a1": "A", "a2": None, "a3": "A"}
        out = cooperate_voting(list(votes), votes.get, quorum=2)
        assert out == Winner(option="a")

    def test_matches_plurality_oracle(self):
        rng = random.Random(77)
        options = ["x", "y", "z"]
        for _ in range(300):
            n = rng.randint(1, 8)
            votes = {f"a{i}": rng.choice(options + [None]) for i in range(n)}
            quorum = rng.randint(1, n)
            out = cooperate_voting(list(votes), votes.get, quorum)
            cast = [v for v in votes.values() if v is not None]
            if len(cast) < quorum:
                assert isinstance(out, QuorumNotMet)
                continue
            from collections import Counter
            tally = Counter(cast)
            top = max(tally.values())
            leaders = {o for o, c in tally.items() if c == top}
            if len(leaders) == 1:
                assert out == Winner(option=leaders.pop())
            else:
                assert out == Tie(options=frozenset(leaders))


class TestAuction:
    def test_max_wins(self):
        bids = {"a1": Bid("a1", 5, 1), "a2": Bid("a2", 7, 2)}
        assert cooperate_auction("task", list(bids), bids.get) == ("a2", 7)

    def test_timestamp_tie_break(self):
        bids = {"a1": Bid("a1", 7, 1), "a2": Bid("a2", 7, 2)}
        assert cooperate_auction("task", list(bids), bids.get) == ("a1", 7)

    def test_lexicographic_tie_break(self):
        bids = {"ax": Bid("ax", 7, 1), "ab": Bid("ab", 7, 1)}
        assert cooperate_auction("task", list(bids), bids.get) == ("ab", 7)

    def test_no_bids(self):
        with pytest.raises(NoBids):
            cooperate_auction("task", ["a1", "a2"], lambda bidder: None)

    def test_matches_oracle(self):
        rng = random.Random(3)
        for _ in range(300):
            n = rng.randint(1, 8)
            bids = {}
            for i in range(n):
                bidder = f"a{rng.randint(0, 5)}-{i}"
                if rng.random() < 0.8:
                    bids[bidder] = Bid(bidder, rng.choice([1.0, 2.5, 7.0]), rng.randint(0, 3))
                else:
                    bids[bidder] = None
            cast = [b for b in bids.values() if b is not None]
            if not cast:
                with pytest.raises(NoBids):
                    cooperate_auction("t", list(bids), bids.get)
                continue
            winner, price = cooperate_auction("t", list(bids), bids.get)
            expected = sorted(cast, key=lambda b: (-b.amount, b.timestamp, b.bidder))[0]
            assert (winner, price) == (expected.bidder, expected.amount)


def role_agent(name, registry, responder):
    return RoleAgent(persona=Persona(id=name.lower(), roles=(name,)), respond=responder)


class TestRoles:
    def test_two_hop_drain(self):
        # Hand-simulated bus: pm publishes requirements; engineer consumes and
        # emits code that nobody subscribes to, so the bus drains at 2 messages.
        pm = role_agent("PM", None, lambda msg: [
            Message(sender="PM", tags=frozenset({"req"}), content="requirements v1")])
        engineer = role_agent("Engineer", None, lambda msg: [
            Message(sender="Engineer", tags=frozenset({"code"}), content=f"code for {msg.content}")])
        subs = {"PM": {"goal"}, "Engineer": {"req"}}
        initial = Message(sender="user", tags=frozenset({"goal"}), content="build it")
        out = cooperate_roles([pm, engineer], subs, initial)
        assert [m.content for m in out.messages] == [
            "build it", "requirements v1", "code for requirements v1"]
        assert not out.cap_exceeded

    def test_no_subscribers(self):
        pm = role_agent("PM", None, lambda msg: [])
        initial = Message(sender="user", tags=frozenset({"nothing"}), content="hello")
        out = cooperate_roles([pm], {"PM": {"goal"}}, initial)
        assert len(out.messages) == 1

    def test_ping_pong_hits_cap(self):
        a = role_agent("A", None, lambda msg: [
            Message(sender="A", tags=frozenset({"b"}), content="ping")])
        b = role_agent("B", None, lambda msg: [
            Message(sender="B", tags=frozenset({"a"}), content="pong")])
        subs = {"A": {"a"}, "B": {"b"}}
        initial = Message(sender="user", tags=frozenset({"a"}), content="go")
        out = cooperate_roles([a, b], subs, initial, message_cap=10)
        assert out.cap_exceeded
        assert len(out.messages) == 10

    def test_sender_does_not_hear_itself(self):
        echoing = role_agent("Echo", None, lambda msg: [
            Message(sender="Echo", tags=frozenset({"x"}), content="again")])
        initial = Message(sender="user", tags=frozenset({"x"}), content="start")
        out = cooperate_roles([echoing], {"Echo": {"x"}}, initial, message_cap=50)
        # Echo reacts to the user message once; its own output is not re-delivered.
        assert [m.content for m in out.messages] == ["start", "again"]


class TestDebate:
    def test_immediate_agreement(self):
        agents = [lambda t, prev: "42", lambda t, prev: " 42 "]
        out = cooperate_debate(agents, "answer?")
        assert out == Consensus(answer="42", rounds=1)

    def test_scripted_convergence_in_round_3(self):
        def stubborn(answers):
            answers = list(answers)

            def agent(topic, prev):
                return answers.pop(0)

            return agent

        a = stubborn(["1", "2", "3"])
        b = stubborn(["9", "8", "3"])
        out = cooperate_debate([a, b], "topic", max_rounds=5)
        assert out == Consensus(answer="3", rounds=3)

    def test_never_agreeing_returns_vector_after_bound(self):
        calls = {"n": 0}

        def contrarian(tag):
            def agent(topic, prev):
                calls["n"] += 1
                return f"{tag}-{calls['n']}"

            return agent

        out = cooperate_debate([contrarian("a"), contrarian("b")], "topic", max_rounds=5)
        assert isinstance(out, NoConsensus)
        assert out.rounds == 5
        assert len(out.answers) == 2
        assert calls["n"] == 2 * 5  # never exceeds agents x max_rounds calls

    def test_consensus_outcome_has_equal_finals(self):
        rng = random.Random(11)
        for _ in range(100):
            n_agents = rng.randint(2, 4)
            max_rounds = rng.randint(1, 5)
            agree_round = rng.randint(1, 7)
            counters = [{"r": 0} for _ in range(n_agents)]

            def make(i):
                def agent(topic, prev):
                    counters[i]["r"] += 1
                    if counters[i]["r"] >= agree_round:
                        return "same"
                    return f"opinion-{i}-{counters[i]['r']}"

                return agent

            agents = [make(i) for i in range(n_agents)]
            out = cooperate_debate(agents, "t", max_rounds=max_rounds)
            total_calls = sum(c["r"] for c in counters)
            assert total_calls <= n_agents * max_rounds
            if isinstance(out, Consensus):
                assert out.rounds == agree_round
