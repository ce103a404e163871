"""Guardrail stages, verdicts, allow/deny lists, and continuous risk assessment.

A guardrail is a named rule attached to one of five pipeline stages. Rules
receive a payload (text, or any structured object the stage contract allows)
and answer with a Verdict: allow it, modify it, or deny it with a reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Sequence

from ..errors import MixedStageKinds


class StageKind(str, Enum):
    INPUT = "input"
    OUTPUT = "output"
    RAG = "rag"
    EXECUTION = "execution"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class Verdict:
    """Outcome of one rule or of a whole pipeline."""

    decision: str  # "allow" | "modify" | "deny"
    payload: Any = None
    reason: str = ""

    def __post_init__(self):
        if self.decision == "deny" and not self.reason:
            raise ValueError("deny verdicts carry a non-empty reason")

    @property
    def denied(self) -> bool:
        return self.decision == "deny"


def allow(payload: Any = None) -> Verdict:
    return Verdict("allow", payload)


def modify(payload: Any) -> Verdict:
    return Verdict("modify", payload)


def deny(reason: str) -> Verdict:
    return Verdict("deny", reason=reason)


Rule = Callable[[Any], Verdict]


@dataclass(frozen=True)
class GuardrailStage:
    """One rule registered at a fixed pipeline stage."""

    name: str
    stage_kind: StageKind
    rule: Rule


def apply_pipeline(
    stages: Sequence[GuardrailStage],
    payload: Any,
    observer: Optional[Callable[[GuardrailStage, Verdict], None]] = None,
) -> Verdict:
    """Run stages in order over the payload.

    modify replaces the payload for later stages; deny short-circuits and
    later stages are never invoked. An empty pipeline allows unchanged.
    The optional observer sees every (stage, verdict) actually evaluated.
    """
    kinds = {stage.stage_kind for stage in stages}
    if len(kinds) > 1:
        raise MixedStageKinds(f"pipeline mixes stage kinds: {sorted(k.value for k in kinds)}")

    current = payload
    for stage in stages:
        verdict = stage.rule(current)
        if observer is not None:
            observer(stage, verdict)
        if verdict.decision == "deny":
            return verdict
        if verdict.decision == "modify":
            current = verdict.payload
    return Verdict("allow", current)


def check_lists(action: str, whitelist: Iterable[str] = (), blacklist: Iterable[str] = ()) -> Verdict:
    """Blacklist wins over whitelist; an empty whitelist permits everything else."""
    white = set(whitelist)
    black = set(blacklist)
    if action in black:
        return deny(f"blacklisted action: {action}")
    if white and action not in white:
        return deny(f"action not whitelisted: {action}")
    return allow(action)


@dataclass(frozen=True)
class RiskMetric:
    name: str
    value: float
    severity_threshold: float
    critical: bool = False


@dataclass
class RiskReport:
    breaches: list[RiskMetric] = field(default_factory=list)
    critical_breach: bool = False


def assess(metrics: Sequence[RiskMetric]) -> RiskReport:
    """A metric breaches only when strictly above its threshold."""
    breached = [m for m in metrics if m.value > m.severity_threshold]
    return RiskReport(breaches=breached, critical_breach=any(m.critical for m in breached))


class ContinuousRiskAssessor:
    """Tracks assessments over time; a critical breach arms an input lockdown."""

    def __init__(self):
        self.armed = False
        self.last_report: Optional[RiskReport] = None

    def assess(self, metrics: Sequence[RiskMetric]) -> RiskReport:
        report = assess(metrics)
        if report.critical_breach:
            self.armed = True
        self.last_report = report
        return report

    def clear(self) -> None:
        """Operator acknowledgement; disarms the deny-all input stage."""
        self.armed = False

    def input_guardrail(self, name: str = "risk-lockdown") -> GuardrailStage:
        """Input stage that denies everything while a critical breach is armed."""

        def rule(payload: Any) -> Verdict:
            if self.armed:
                return deny("critical risk breach armed; awaiting operator clearance")
            return allow(payload)

        return GuardrailStage(name=name, stage_kind=StageKind.INPUT, rule=rule)
