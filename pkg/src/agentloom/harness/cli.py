"""Command-line harness.

Exit codes: 0 success, 1 domain denial/corruption/failed run, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigError, LoomError
from ..execution import ToolDescriptor, ToolRegistry
from ..interaction import ContextEvent, EventKind, Goal
from ..rai import (
    AibomRecord,
    AibomRegistry,
    AuditLog,
    CoVersionEntry,
    CoVersionRegistry,
    CredentialStatus,
    explain,
    verify_provenance,
)
from .config import load_config
from .runner import run


def _load_events(path: str) -> list[ContextEvent]:
    events = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        events.append(ContextEvent(kind=EventKind(raw["kind"]), payload=raw["payload"],
                                   timestamp=raw.get("timestamp", 0),
                                   source=raw.get("source", "")))
    return events


def _confirm_on_stdin(goal: Goal) -> bool:
    sys.stderr.write(f"proposed goal ({goal.confidence:.2f} confidence): {goal.objective}\n"
                     f"accept? [y/N] ")
    sys.stderr.flush()
    answer = sys.stdin.readline().strip().lower()
    return answer in ("y", "yes")


def _human_feedback_on_stdin(plan_text: str) -> str:
    sys.stderr.write(f"current plan:\n{plan_text}\n"
                     f"feedback ('approve' to accept): ")
    sys.stderr.flush()
    return sys.stdin.readline().strip() or "approve"


def cmd_run(args) -> int:
    config = load_config(args.config)
    events = _load_events(args.events) if args.events else None
    result = run(config, args.goal or "", events=events,
                 confirm=_confirm_on_stdin, human_feedback=_human_feedback_on_stdin)
    if args.transcript:
        result.transcript.save(args.transcript)
    if args.audit:
        result.audit.save(args.audit)
    print(f"status: {result.final_status}")
    if result.final_output:
        print(f"output: {result.final_output}")
    return 0 if result.final_status == "completed" else 1


def cmd_verify_log(args) -> int:
    log = AuditLog.load(args.audit)
    bad = log.verify()
    if bad is None:
        print(f"ok: {len(log.records)} records")
        return 0
    print(f"corrupted at index {bad}")
    return 1


def cmd_explain(args) -> int:
    log = AuditLog.load(args.audit)
    explanation = explain(log, args.task)
    print(explanation.render())
    return 0


def cmd_registry(args) -> int:
    path = Path(args.file)
    registry = ToolRegistry.load(path) if path.exists() else ToolRegistry()
    if args.registry_command == "add-tool":
        registry.add(ToolDescriptor(
            name=args.name, description=args.description,
            input_fields=tuple(filter(None, (args.inputs or "").split(","))),
            output_fields=tuple(filter(None, (args.outputs or "").split(","))),
            handler_id=args.handler, provenance_ref=args.provenance))
        registry.save(path)
        print(f"added {args.name}")
        return 0
    for tool in registry.tools():
        bound = tool.handler_id or "(unbound)"
        print(f"{tool.name}\t{bound}\t{tool.description}")
    return 0


def cmd_aibom(args) -> int:
    path = Path(args.file)
    registry = AibomRegistry.load(path) if path.exists() else AibomRegistry()
    if args.aibom_command == "add":
        registry.add(AibomRecord(
            component_id=args.id, supplier=args.supplier, version=args.version,
            checksum=bytes.fromhex(args.checksum),
            credential_status=CredentialStatus(args.credential)))
        registry.save(path)
        print(f"registered {args.id}")
        return 0
    verdict = verify_provenance(registry, args.id, bytes.fromhex(args.checksum))
    if verdict.denied:
        print(f"deny: {verdict.reason}")
        return 1
    print("allow")
    return 0


def cmd_coversion(args) -> int:
    path = Path(args.file)
    registry = CoVersionRegistry.load(path) if path.exists() else CoVersionRegistry()
    if args.coversion_command == "add":
        derived = None
        if args.derived_from:
            component, _, version = args.derived_from.partition("@")
            derived = (component, version)
        compatible = frozenset(
            tuple(pair.partition("@")[::2]) for pair in (args.compatible or []))
        registry.register(CoVersionEntry(component_id=args.id, version=args.version,
                                         derived_from=derived, compatible_with=compatible))
        registry.save(path)
        print(f"registered {args.id}@{args.version}")
        return 0
    chain = registry.lineage(args.id, args.version)
    for component, version in chain:
        print(f"{component}@{version}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentloom",
                                     description="pattern-configurable agent harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a goal through a configured agent")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--goal", default="")
    p_run.add_argument("--events", help="context-events JSONL (proactive goal creator)")
    p_run.add_argument("--transcript", help="transcript output path")
    p_run.add_argument("--audit", help="audit log output path")
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify-log", help="verify an audit log's hash chain")
    p_verify.add_argument("--audit", required=True)
    p_verify.set_defaults(fn=cmd_verify_log)

    p_explain = sub.add_parser("explain", help="explain one task from an audit log")
    p_explain.add_argument("--audit", required=True)
    p_explain.add_argument("--task", required=True)
    p_explain.set_defaults(fn=cmd_explain)

    p_registry = sub.add_parser("registry", help="tool registry maintenance")
    registry_sub = p_registry.add_subparsers(dest="registry_command", required=True)
    p_add = registry_sub.add_parser("add-tool")
    p_add.add_argument("--file", required=True)
    p_add.add_argument("--name", required=True)
    p_add.add_argument("--description", required=True)
    p_add.add_argument("--inputs", default="")
    p_add.add_argument("--outputs", default="")
    p_add.add_argument("--handler")
    p_add.add_argument("--provenance")
    p_add.set_defaults(fn=cmd_registry)
    p_list = registry_sub.add_parser("list")
    p_list.add_argument("--file", required=True)
    p_list.set_defaults(fn=cmd_registry)

    p_aibom = sub.add_parser("aibom", help="AIBOM registry maintenance")
    aibom_sub = p_aibom.add_subparsers(dest="aibom_command", required=True)
    a_add = aibom_sub.add_parser("add")
    a_add.add_argument("--file", required=True)
    a_add.add_argument("--id", required=True)
    a_add.add_argument("--supplier", default="")
    a_add.add_argument("--version", default="0")
    a_add.add_argument("--checksum", required=True, help="hex digest")
    a_add.add_argument("--credential", default="valid",
                       choices=[c.value for c in CredentialStatus])
    a_add.set_defaults(fn=cmd_aibom)
    a_verify = aibom_sub.add_parser("verify")
    a_verify.add_argument("--file", required=True)
    a_verify.add_argument("--id", required=True)
    a_verify.add_argument("--checksum", required=True, help="observed hex digest")
    a_verify.set_defaults(fn=cmd_aibom)

    p_coversion = sub.add_parser("coversion", help="co-versioning registry maintenance")
    coversion_sub = p_coversion.add_subparsers(dest="coversion_command", required=True)
    c_add = coversion_sub.add_parser("add")
    c_add.add_argument("--file", required=True)
    c_add.add_argument("--id", required=True)
    c_add.add_argument("--version", required=True)
    c_add.add_argument("--derived-from", help="component@version")
    c_add.add_argument("--compatible", action="append", help="component@version (repeatable)")
    c_add.set_defaults(fn=cmd_coversion)
    c_lineage = coversion_sub.add_parser("lineage")
    c_lineage.add_argument("--file", required=True)
    c_lineage.add_argument("--id", required=True)
    c_lineage.add_argument("--version", required=True)
    c_lineage.set_defaults(fn=cmd_coversion)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        parser.exit(2, f"agentloom: {exc}\n")
    except LoomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
