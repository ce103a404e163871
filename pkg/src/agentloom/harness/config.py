"""Declarative agent configuration.

A config is a sectioned key-value file choosing one option per
architectural pattern: goal creator, planner, querying mode, reflection,
cooperation, guardrail stacks, backends, and (for coordinators) delegate
agents. docs/example-config.cfg in the repository shows every section with
comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ConfigParseError, InvalidConfig, UnresolvedReference
from ..rai import StageKind
from .rules import build_rule

MAX_DELEGATION_DEPTH = 3

_LIST_SEP = ","


@dataclass
class BackendConfig:
    name: str
    kind: str = "scripted"  # scripted | gateway
    context_window: int = 128_000
    fixtures: Optional[str] = None  # scripted: JSONL fixture file
    echo: bool = False              # scripted: echo instead of fixtures
    base_url: Optional[str] = None  # gateway
    credentials: Optional[str] = None
    aibom: Optional[str] = None     # AIBOM component id
    checksum: Optional[str] = None  # observed checksum override (hex)


@dataclass
class RoleConfig:
    name: str
    subscribes: set[str] = field(default_factory=set)
    emits: set[str] = field(default_factory=set)
    backend: str = ""
    style: str = ""


@dataclass
class CooperationConfig:
    mode: str  # voting | roles | auction | debate
    quorum: int = 1
    max_rounds: int = 5
    agents: list[str] = field(default_factory=list)  # backend names (voting/debate)
    initial_tags: set[str] = field(default_factory=lambda: {"task"})
    message_cap: int = 100


@dataclass
class ReflectionConfig:
    source: str = "self"  # self | cross | human
    max_rounds: int = 3
    backend: Optional[str] = None  # cross: the critiquing backend


@dataclass
class PlanningConfig:
    mode: str = "single_path"  # single_path | multi_path
    querying: str = "one_shot"  # one_shot | incremental
    max_steps: int = 16
    branching: int = 2
    depth: int = 2


@dataclass
class MemoryConfig:
    budget: int = 4096
    retrieval_k: int = 4
    preload: Optional[str] = None  # long-term store JSONL to start from


@dataclass
class AgentConfig:
    agent_role: str = "worker"  # worker | coordinator
    goal_creator: str = "passive"  # passive | proactive
    confidence_threshold: float = 0.7
    node_id: str = "local"
    finale: str = "none"  # none | summary | explain
    fixed_clock: Optional[int] = None
    clock_step: int = 1
    max_retries: int = 2

    persona_roles: list[str] = field(default_factory=lambda: ["Agent"])
    persona_style: str = ""
    persona_expertise: list[str] = field(default_factory=list)
    persona_limitations: list[str] = field(default_factory=list)

    memory: MemoryConfig = field(default_factory=MemoryConfig)
    planning: PlanningConfig = field(default_factory=PlanningConfig)
    reflection: Optional[ReflectionConfig] = None
    cooperation: Optional[CooperationConfig] = None
    guardrails: dict[StageKind, list[str]] = field(default_factory=dict)
    backends: list[BackendConfig] = field(default_factory=list)
    roles: list[RoleConfig] = field(default_factory=list)
    n_version: list[str] = field(default_factory=list)
    delegates: list["AgentConfig"] = field(default_factory=list)
    allocation: str = "round_robin"  # round_robin | auction
    tools_file: Optional[str] = None
    rank_with_backend: bool = False
    aibom_file: Optional[str] = None
    base_dir: Path = field(default_factory=Path)

    def backend_names(self) -> set[str]:
        return {b.name for b in self.backends}

    def resolve_path(self, relative: str) -> Path:
        return (self.base_dir / relative).resolve()


def _split_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(_LIST_SEP) if part.strip()]


def _parse_sections(text: str) -> list[tuple[str, str, dict[str, str], int]]:
    """Return (section, argument, key-values, header line number) tuples."""
    sections: list[tuple[str, str, dict[str, str], int]] = []
    current: Optional[dict[str, str]] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            closing = line.find("]")
            if closing == -1:
                raise ConfigParseError(lineno, "unterminated section header")
            trailing = line[closing + 1:].strip()
            if trailing and not trailing.startswith(("#", ";")):
                raise ConfigParseError(lineno, f"unexpected text after section: {trailing!r}")
            header = line[1:closing].strip()
            if not header:
                raise ConfigParseError(lineno, "empty section header")
            name, _, argument = header.partition(" ")
            current = {}
            sections.append((name, argument.strip(), current, lineno))
            continue
        if current is None:
            raise ConfigParseError(lineno, "key outside any section")
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigParseError(lineno, f"expected 'key = value', got {line!r}")
        comment = value.find("#")
        if comment != -1:
            value = value[:comment]
        current[key.strip()] = value.strip()
    return sections


def _to_int(value: str, lineno: int, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigParseError(lineno, f"{key} must be an integer, got {value!r}") from None


def _to_float(value: str, lineno: int, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigParseError(lineno, f"{key} must be a number, got {value!r}") from None


def load_config(path: str | Path, _depth: int = 0) -> AgentConfig:
    """Parse and fully validate a config file, including delegate configs."""
    path = Path(path)
    if _depth > MAX_DELEGATION_DEPTH:
        raise InvalidConfig(f"delegation nesting exceeds {MAX_DELEGATION_DEPTH}: {path}")
    if not path.exists():
        raise UnresolvedReference(str(path), "config file not found")
    config = AgentConfig(base_dir=path.parent.resolve())

    delegate_paths: list[str] = []
    for section, argument, values, lineno in _parse_sections(path.read_text(encoding="utf-8")):
        if section == "agent":
            config.agent_role = values.get("role", config.agent_role)
            config.goal_creator = values.get("goal_creator", config.goal_creator)
            if "threshold" in values:
                config.confidence_threshold = _to_float(values["threshold"], lineno, "threshold")
            config.node_id = values.get("node_id", config.node_id)
            config.finale = values.get("finale", config.finale)
            if "fixed_clock" in values:
                config.fixed_clock = _to_int(values["fixed_clock"], lineno, "fixed_clock")
            if "clock_step" in values:
                config.clock_step = _to_int(values["clock_step"], lineno, "clock_step")
            if "max_retries" in values:
                config.max_retries = _to_int(values["max_retries"], lineno, "max_retries")
        elif section == "persona":
            config.persona_roles = _split_list(values.get("roles", "Agent"))
            config.persona_style = values.get("style", "")
            config.persona_expertise = _split_list(values.get("expertise", ""))
            config.persona_limitations = _split_list(values.get("limitations", ""))
        elif section == "memory":
            if "budget" in values:
                config.memory.budget = _to_int(values["budget"], lineno, "budget")
            if "retrieval_k" in values:
                config.memory.retrieval_k = _to_int(values["retrieval_k"], lineno, "retrieval_k")
            config.memory.preload = values.get("preload") or None
        elif section == "planning":
            planning = config.planning
            planning.mode = values.get("mode", planning.mode)
            planning.querying = values.get("querying", planning.querying)
            if "max_steps" in values:
                planning.max_steps = _to_int(values["max_steps"], lineno, "max_steps")
            if "branching" in values:
                planning.branching = _to_int(values["branching"], lineno, "branching")
            if "depth" in values:
                planning.depth = _to_int(values["depth"], lineno, "depth")
        elif section == "reflection":
            config.reflection = ReflectionConfig(
                source=values.get("source", "self"),
                max_rounds=_to_int(values.get("max_rounds", "3"), lineno, "max_rounds"),
                backend=values.get("backend") or None)
        elif section == "guardrails":
            for kind in StageKind:
                if kind.value in values:
                    config.guardrails[kind] = _split_list(values[kind.value])
        elif section == "backend":
            if not argument:
                raise ConfigParseError(lineno, "backend section needs a name: [backend NAME]")
            config.backends.append(BackendConfig(
                name=argument,
                kind=values.get("kind", "scripted"),
                context_window=_to_int(values.get("context_window", "128000"),
                                       lineno, "context_window"),
                fixtures=values.get("fixtures") or None,
                echo=values.get("echo", "").lower() in ("1", "true", "yes"),
                base_url=values.get("base_url") or None,
                credentials=values.get("credentials") or None,
                aibom=values.get("aibom") or None,
                checksum=values.get("checksum") or None))
        elif section == "role":
            if not argument:
                raise ConfigParseError(lineno, "role section needs a name: [role NAME]")
            config.roles.append(RoleConfig(
                name=argument,
                subscribes=set(_split_list(values.get("subscribes", ""))),
                emits=set(_split_list(values.get("emits", ""))),
                backend=values.get("backend", ""),
                style=values.get("style", "")))
        elif section == "cooperation":
            if "mode" not in values:
                raise ConfigParseError(lineno, "cooperation section needs a mode")
            config.cooperation = CooperationConfig(
                mode=values["mode"],
                quorum=_to_int(values.get("quorum", "1"), lineno, "quorum"),
                max_rounds=_to_int(values.get("max_rounds", "5"), lineno, "max_rounds"),
                agents=_split_list(values.get("agents", "")),
                initial_tags=set(_split_list(values.get("initial_tags", "task"))) or {"task"},
                message_cap=_to_int(values.get("message_cap", "100"), lineno, "message_cap"))
        elif section == "n_version":
            config.n_version = _split_list(values.get("backends", ""))
        elif section == "delegates":
            delegate_paths = _split_list(values.get("configs", ""))
            config.allocation = values.get("allocation", config.allocation)
        elif section == "tools":
            config.tools_file = values.get("file") or None
            config.rank_with_backend = values.get("rank", "").lower() in ("1", "true", "yes")
        elif section == "aibom":
            config.aibom_file = values.get("file") or None
        else:
            raise ConfigParseError(lineno, f"unknown section [{section}]")

    for delegate_path in delegate_paths:
        config.delegates.append(load_config(config.resolve_path(delegate_path), _depth + 1))

    validate_config(config)
    return config


def validate_config(config: AgentConfig) -> None:
    if config.agent_role not in ("worker", "coordinator"):
        raise InvalidConfig(f"unknown agent role {config.agent_role!r}")
    if config.goal_creator not in ("passive", "proactive"):
        raise InvalidConfig(f"unknown goal creator {config.goal_creator!r}")
    if config.finale not in ("none", "summary", "explain"):
        raise InvalidConfig(f"unknown finale {config.finale!r}")
    if config.agent_role == "worker" and config.delegates:
        raise UnresolvedReference("delegates", "worker configs must not declare delegates")
    if not config.persona_roles:
        raise InvalidConfig("persona needs at least one role")
    if not config.backends:
        raise UnresolvedReference("backend", "at least one backend section is required")
    if config.planning.mode not in ("single_path", "multi_path"):
        raise InvalidConfig(f"unknown planner {config.planning.mode!r}")
    if config.planning.querying not in ("one_shot", "incremental"):
        raise InvalidConfig(f"unknown querying mode {config.planning.querying!r}")

    names = config.backend_names()
    for backend in config.backends:
        if backend.kind not in ("scripted", "gateway"):
            raise InvalidConfig(f"backend {backend.name}: unknown kind {backend.kind!r}")
        if backend.kind == "gateway" and not backend.base_url:
            raise UnresolvedReference(backend.name, "gateway backend needs base_url")
        if backend.kind == "scripted" and backend.fixtures:
            fixture_path = config.resolve_path(backend.fixtures)
            if not fixture_path.exists():
                raise UnresolvedReference(backend.fixtures,
                                          f"fixture file for backend {backend.name}")

    for kind, rule_names in config.guardrails.items():
        for rule_name in rule_names:
            if build_rule(rule_name) is None:
                raise UnresolvedReference(rule_name, f"guardrail rule at stage {kind.value}")

    if config.reflection:
        if config.reflection.source not in ("self", "cross", "human"):
            raise InvalidConfig(f"unknown reflection source {config.reflection.source!r}")
        if config.reflection.backend and config.reflection.backend not in names:
            raise UnresolvedReference(config.reflection.backend, "reflection backend")
        if config.reflection.source == "cross" and not config.reflection.backend:
            raise UnresolvedReference("reflection.backend",
                                      "cross reflection needs a distinct backend")

    cooperation = config.cooperation
    if cooperation:
        if cooperation.mode not in ("voting", "roles", "auction", "debate"):
            raise InvalidConfig(f"unknown cooperation mode {cooperation.mode!r}")
        if cooperation.mode == "auction" and config.agent_role != "coordinator":
            raise InvalidConfig("auction cooperation allocates tasks; it requires a coordinator")
        if cooperation.mode in ("voting", "debate"):
            missing = [a for a in cooperation.agents if a not in names]
            if missing:
                raise UnresolvedReference(missing[0], "cooperation agent backend")
            minimum = 1 if cooperation.mode == "voting" else 2
            if len(cooperation.agents) < minimum:
                raise InvalidConfig(f"{cooperation.mode} needs >= {minimum} agents")
        if cooperation.mode == "roles":
            if not config.roles:
                raise UnresolvedReference("role", "roles cooperation needs [role NAME] sections")
            for role in config.roles:
                if role.backend not in names:
                    raise UnresolvedReference(role.backend or "(unset)",
                                              f"backend for role {role.name}")

    if config.n_version:
        if len(config.n_version) < 2:
            raise InvalidConfig("n_version needs at least 2 backends")
        missing = [b for b in config.n_version if b not in names]
        if missing:
            raise UnresolvedReference(missing[0], "n_version backend")

    if config.allocation not in ("round_robin", "auction"):
        raise InvalidConfig(f"unknown allocation policy {config.allocation!r}")
    if config.tools_file and not config.resolve_path(config.tools_file).exists():
        raise UnresolvedReference(config.tools_file, "tools registry file")
    if config.aibom_file and not config.resolve_path(config.aibom_file).exists():
        raise UnresolvedReference(config.aibom_file, "AIBOM registry file")
