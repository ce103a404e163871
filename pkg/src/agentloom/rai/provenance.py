"""AIBOM supply-chain registry and FM co-versioning.

External components (backends, tools, agents) get refused when their
bill-of-materials entry is absent, mismatched, or carries a bad credential.
The co-versioning registry tracks derivation lineage (base model to
fine-tune) and declared compatibility pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from ..errors import CycleDetected, DuplicateComponent, UnknownVersion
from .guardrails import Verdict, allow, deny


class CredentialStatus(str, Enum):
    VALID = "valid"
    EXPIRED = "expired"
    ABSENT = "absent"


@dataclass(frozen=True)
class AibomRecord:
    component_id: str
    supplier: str
    version: str
    checksum: bytes
    risk_metrics: dict[str, float] = field(default_factory=dict)
    credential_status: CredentialStatus = CredentialStatus.VALID


class AibomRegistry:
    def __init__(self):
        self._records: dict[str, AibomRecord] = {}

    def add(self, record: AibomRecord) -> None:
        if record.component_id in self._records:
            raise DuplicateComponent(record.component_id)
        self._records[record.component_id] = record

    def get(self, component_id: str) -> Optional[AibomRecord]:
        return self._records.get(component_id)

    def __contains__(self, component_id: str) -> bool:
        return component_id in self._records

    def save(self, path: str | Path) -> None:
        lines = []
        for rec in self._records.values():
            lines.append(json.dumps({
                "component_id": rec.component_id, "supplier": rec.supplier,
                "version": rec.version, "checksum": rec.checksum.hex(),
                "risk_metrics": rec.risk_metrics,
                "credential_status": rec.credential_status.value,
            }, sort_keys=True))
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AibomRegistry":
        registry = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            registry.add(AibomRecord(
                component_id=raw["component_id"], supplier=raw["supplier"],
                version=raw["version"], checksum=bytes.fromhex(raw["checksum"]),
                risk_metrics=raw.get("risk_metrics", {}),
                credential_status=CredentialStatus(raw.get("credential_status", "valid")),
            ))
        return registry


def verify_provenance(registry: AibomRegistry, component_id: str,
                      observed_checksum: Optional[bytes]) -> Verdict:
    """Refuse absent registrations, checksum mismatches, and bad credentials."""
    record = registry.get(component_id)
    if record is None:
        return deny(f"absent: no AIBOM record for {component_id}")
    if observed_checksum is None or observed_checksum != record.checksum:
        return deny(f"checksum mismatch for {component_id}")
    if record.credential_status is not CredentialStatus.VALID:
        return deny(f"credential {record.credential_status.value} for {component_id}")
    return allow(component_id)


# --- co-versioning ----------------------------------------------------------

VersionKey = tuple[str, str]  # (component_id, version)


@dataclass(frozen=True)
class CoVersionEntry:
    component_id: str
    version: str
    derived_from: Optional[VersionKey] = None
    compatible_with: frozenset[VersionKey] = frozenset()

    @property
    def key(self) -> VersionKey:
        return (self.component_id, self.version)


class CoVersionRegistry:
    """Derivation graph over (component, version) pairs; must stay acyclic."""

    def __init__(self):
        self._entries: dict[VersionKey, CoVersionEntry] = {}

    def register(self, entry: CoVersionEntry) -> None:
        if self._would_cycle(entry):
            raise CycleDetected(f"{entry.key} -> {entry.derived_from}")
        self._entries[entry.key] = entry

    def _would_cycle(self, entry: CoVersionEntry) -> bool:
        seen = {entry.key}
        cursor = entry.derived_from
        while cursor is not None:
            if cursor in seen:
                return True
            seen.add(cursor)
            parent = self._entries.get(cursor)
            cursor = parent.derived_from if parent else None
        return False

    def get(self, component_id: str, version: str) -> CoVersionEntry:
        try:
            return self._entries[(component_id, version)]
        except KeyError:
            raise UnknownVersion(f"{component_id}@{version}") from None

    def lineage(self, component_id: str, version: str) -> list[VersionKey]:
        """Derivation chain, root first, ending at the requested version."""
        chain = []
        cursor: Optional[VersionKey] = (component_id, version)
        while cursor is not None:
            if cursor not in self._entries:
                raise UnknownVersion(f"{cursor[0]}@{cursor[1]}")
            chain.append(cursor)
            cursor = self._entries[cursor].derived_from
        chain.reverse()
        return chain

    def check(self, fm: VersionKey, adapter: VersionKey) -> Verdict:
        """Allow only pairs declared compatible on either side."""
        declared = set()
        if fm in self._entries:
            declared |= self._entries[fm].compatible_with
        if adapter in self._entries:
            if fm in self._entries[adapter].compatible_with:
                declared.add(adapter)
        if adapter in declared:
            return allow((fm, adapter))
        return deny(f"{fm[0]}@{fm[1]} not co-versioned with {adapter[0]}@{adapter[1]}")

    def save(self, path: str | Path) -> None:
        lines = []
        for entry in self._entries.values():
            lines.append(json.dumps({
                "component_id": entry.component_id, "version": entry.version,
                "derived_from": list(entry.derived_from) if entry.derived_from else None,
                "compatible_with": sorted(list(pair) for pair in entry.compatible_with),
            }, sort_keys=True))
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CoVersionRegistry":
        registry = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            registry.register(CoVersionEntry(
                component_id=raw["component_id"], version=raw["version"],
                derived_from=tuple(raw["derived_from"]) if raw.get("derived_from") else None,
                compatible_with=frozenset(tuple(p) for p in raw.get("compatible_with", [])),
            ))
        return registry
