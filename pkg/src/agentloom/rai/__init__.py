"""Responsible-AI plugin bus: guardrails, audit chain, provenance, co-versioning."""

from .audit import (
    GENESIS,
    GUARDRAIL,
    HANDLER_IO,
    OUTPUT,
    PERSONA,
    RATIONALE,
    AuditLog,
    AuditRecord,
    Explanation,
    canonical_payload,
    chain_hash,
    explain,
    task_payload,
    verify_chain,
)
from .guardrails import (
    ContinuousRiskAssessor,
    GuardrailStage,
    RiskMetric,
    RiskReport,
    StageKind,
    Verdict,
    allow,
    apply_pipeline,
    assess,
    check_lists,
    deny,
    modify,
)
from .provenance import (
    AibomRecord,
    AibomRegistry,
    CoVersionEntry,
    CoVersionRegistry,
    CredentialStatus,
    verify_provenance,
)

__all__ = [
    "AuditLog", "AuditRecord", "Explanation", "explain", "verify_chain", "chain_hash",
    "canonical_payload", "task_payload", "GENESIS",
    "PERSONA", "RATIONALE", "GUARDRAIL", "HANDLER_IO", "OUTPUT",
    "GuardrailStage", "StageKind", "Verdict", "allow", "modify", "deny",
    "apply_pipeline", "check_lists", "RiskMetric", "RiskReport", "assess",
    "ContinuousRiskAssessor",
    "AibomRecord", "AibomRegistry", "CredentialStatus", "verify_provenance",
    "CoVersionEntry", "CoVersionRegistry",
]
