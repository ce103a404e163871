"""Named guardrail rules and tool handlers resolvable from config files.

Rule and handler names are small specs: a bare name ("allow-all") or a
parameterised one ("deny-contains:SECRET", "const:label: cat"). Configs
reference these names; anything unresolvable fails validation.
"""

from __future__ import annotations

from typing import Any, Optional

from ..execution.tools import Handler
from ..rai.guardrails import Rule, allow, check_lists, deny, modify
from ..textutil import canonical_json, token_count

REDACTION = "[REDACTED]"


def payload_text(payload: Any) -> str:
    if isinstance(payload, str):
        return payload
    return canonical_json(payload)


def build_rule(spec: str) -> Optional[Rule]:
    """Return the rule for a spec string, or None when unknown."""
    name, _, arg = spec.partition(":")

    if name == "allow-all":
        return lambda payload: allow(payload)
    if name == "deny-contains":
        needle = arg

        def deny_contains(payload):
            if needle and needle in payload_text(payload):
                return deny(f"payload contains forbidden text {needle!r}")
            return allow(payload)

        return deny_contains
    if name == "redact":
        needle = arg

        def redact(payload):
            if isinstance(payload, str) and needle and needle in payload:
                return modify(payload.replace(needle, REDACTION))
            return allow(payload)

        return redact
    if name == "blacklist":
        entries = {e for e in arg.split("|") if e}
        return lambda payload: check_lists(payload_text(payload), blacklist=entries)
    if name == "whitelist":
        entries = {e for e in arg.split("|") if e}
        return lambda payload: check_lists(payload_text(payload), whitelist=entries)
    if name == "max-tokens":
        try:
            limit = int(arg)
        except ValueError:
            return None

        def max_tokens(payload):
            used = token_count(payload_text(payload))
            if used > limit:
                return deny(f"payload needs {used} tokens, limit is {limit}")
            return allow(payload)

        return max_tokens
    return None


def build_handler(handler_id: str) -> Optional[Handler]:
    """Return the executable for a builtin handler id, or None when unknown."""
    name, _, arg = handler_id.partition(":")

    if name == "echo":
        def echo(inputs: dict[str, str]) -> str:
            if len(inputs) == 1:
                return next(iter(inputs.values()))
            return canonical_json(inputs)

        return echo
    if name == "upper":
        def upper(inputs: dict[str, str]) -> str:
            if len(inputs) == 1:
                return next(iter(inputs.values())).upper()
            return canonical_json(inputs).upper()

        return upper
    if name == "const":
        return lambda inputs: arg
    if name == "concat":
        return lambda inputs: " ".join(inputs[key] for key in sorted(inputs))
    return None
