"""FM backend boundary: scripted test double, HTTP gateway, N-version masking.

Every framework component talks to a backend through complete(), which
enforces the context window and, when the backend carries an AIBOM id,
refuses to call it unless provenance verifies.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import httpx

from .errors import (
    ContextWindowExceeded,
    GatewayError,
    MalformedReply,
    ProvenanceDenied,
    RateLimited,
    ScriptExhausted,
)
from .rai import AibomRegistry, verify_provenance
from .textutil import canonical_answer, canonical_json, token_count

DEFAULT_WINDOW = 128_000  # tokens


@dataclass(frozen=True)
class ModelRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: Optional[int] = None
    model_id: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    model_id: str

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class BackendDescriptor:
    id: str
    kind: str  # "scripted" | "gateway"
    context_window: int = DEFAULT_WINDOW
    aibom_component_id: Optional[str] = None

    def __post_init__(self):
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")


def descriptor_checksum(descriptor: BackendDescriptor) -> bytes:
    """Observed fingerprint used against AIBOM records."""
    blob = canonical_json({
        "id": descriptor.id, "kind": descriptor.kind,
        "context_window": descriptor.context_window,
        "aibom_component_id": descriptor.aibom_component_id,
    })
    return hashlib.sha256(blob.encode("utf-8")).digest()


class Backend:
    """Base for backends; subclasses implement _complete only."""

    def __init__(self, descriptor: BackendDescriptor,
                 aibom: Optional[AibomRegistry] = None,
                 checksum: Optional[bytes] = None):
        self.descriptor = descriptor
        self.aibom = aibom
        self.checksum = checksum if checksum is not None else descriptor_checksum(descriptor)

    def _complete(self, request: ModelRequest) -> ModelResponse:
        raise NotImplementedError

    def complete(self, request: ModelRequest) -> ModelResponse:
        return complete(self, request)


def complete(backend: Backend, request: ModelRequest) -> ModelResponse:
    """Window- and provenance-checked completion; never invokes a refused backend."""
    needed = token_count(request.prompt)
    window = backend.descriptor.context_window
    if needed > window:
        raise ContextWindowExceeded(f"prompt needs {needed} tokens, window is {window}")
    component = backend.descriptor.aibom_component_id
    if component is not None:
        registry = backend.aibom if backend.aibom is not None else AibomRegistry()
        verdict = verify_provenance(registry, component, backend.checksum)
        if verdict.denied:
            raise ProvenanceDenied(verdict.reason)
    return backend._complete(request)


def ask(backend: Backend, prompt: str, *, temperature: float = 0.0,
        max_tokens: int = 1024, seed: Optional[int] = None) -> str:
    """Convenience wrapper returning just the response text."""
    request = ModelRequest(prompt=prompt, temperature=temperature,
                           max_tokens=max_tokens, seed=seed,
                           model_id=backend.descriptor.id)
    return complete(backend, request).text


# --- scripted backend --------------------------------------------------------

NEXT = None  # sequential matcher sentinel


@dataclass
class Fixture:
    matcher: Optional[str]  # substring, or NEXT for consume-in-order
    response: str
    consumed: bool = False


class ScriptedBackend(Backend):
    """Deterministic test double.

    Fixtures are scanned in declaration order on every call. A substring
    fixture applies whenever its needle occurs in the prompt and is never
    consumed; a sequential fixture applies to any prompt, once. When no
    fixture applies the script is exhausted.
    """

    _echo = False  # echo backends answer every prompt with itself

    def __init__(self, fixtures: Sequence[tuple[Optional[str], str]],
                 *, id: str = "scripted", context_window: int = DEFAULT_WINDOW,
                 aibom_component_id: Optional[str] = None,
                 aibom: Optional[AibomRegistry] = None,
                 checksum: Optional[bytes] = None):
        super().__init__(
            BackendDescriptor(id=id, kind="scripted", context_window=context_window,
                              aibom_component_id=aibom_component_id),
            aibom=aibom, checksum=checksum)
        self.fixtures = [Fixture(matcher, response) for matcher, response in fixtures]
        self.calls = 0
        self.prompts: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def sequential(cls, *responses: str, **kwargs) -> "ScriptedBackend":
        return cls([(NEXT, response) for response in responses], **kwargs)

    @classmethod
    def echo(cls, **kwargs) -> "ScriptedBackend":
        backend = cls([], **kwargs)
        backend._echo = True
        return backend

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScriptedBackend":
        fixtures = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            fixtures.append((raw.get("matcher"), raw["response"]))
        return cls(fixtures, **kwargs)

    def _complete(self, request: ModelRequest) -> ModelResponse:
        with self._lock:
            self.calls += 1
            self.prompts.append(request.prompt)
            text = self._pick(request.prompt)
        return ModelResponse(text=text,
                             prompt_tokens=token_count(request.prompt),
                             completion_tokens=token_count(text),
                             model_id=self.descriptor.id)

    def _pick(self, prompt: str) -> str:
        for fixture in self.fixtures:
            if fixture.matcher is NEXT:
                if not fixture.consumed:
                    fixture.consumed = True
                    return fixture.response
            elif fixture.matcher in prompt:
                return fixture.response
        if self._echo:
            return prompt
        raise ScriptExhausted(f"no fixture applies after {self.calls} calls")


def save_fixtures(fixtures: Sequence[tuple[Optional[str], str]], path: str | Path) -> None:
    lines = [json.dumps({"matcher": matcher, "response": response}, ensure_ascii=False)
             for matcher, response in fixtures]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# --- gateway backend ---------------------------------------------------------

class GatewayBackend(Backend):
    """OpenAI-compatible chat-completions client.

    Requests POST to <base_url>/v1/chat/completions with a single user
    message; the reply's first choice carries the text. A custom transport
    can be injected for offline tests.
    """

    def __init__(self, base_url: str, model_id: str, credentials: Optional[str] = None,
                 *, context_window: int = DEFAULT_WINDOW,
                 aibom_component_id: Optional[str] = None,
                 aibom: Optional[AibomRegistry] = None,
                 checksum: Optional[bytes] = None,
                 transport: Optional[httpx.BaseTransport] = None,
                 timeout: float = 30.0):
        super().__init__(
            BackendDescriptor(id=model_id, kind="gateway", context_window=context_window,
                              aibom_component_id=aibom_component_id),
            aibom=aibom, checksum=checksum)
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.credentials = credentials
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def encode(self, request: ModelRequest) -> dict:
        body = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        return body

    def decode(self, reply: dict, request: ModelRequest) -> ModelResponse:
        choices = reply.get("choices") or []
        if not choices:
            raise MalformedReply("reply has zero choices")
        message = choices[0].get("message") or {}
        content = message.get("content")
        if content is None:
            raise MalformedReply("first choice has no message content")
        usage = reply.get("usage") or {}
        try:
            return ModelResponse(
                text=content,
                prompt_tokens=usage.get("prompt_tokens", token_count(request.prompt)),
                completion_tokens=usage.get("completion_tokens", token_count(content)),
                model_id=self.model_id,
            )
        except (TypeError, ValueError) as exc:
            raise MalformedReply(f"bad usage fields: {exc}") from exc

    def _complete(self, request: ModelRequest) -> ModelResponse:
        headers = {"Content-Type": "application/json"}
        if self.credentials:
            headers["Authorization"] = f"Bearer {self.credentials}"
        response = self._client.post(f"{self.base_url}/v1/chat/completions",
                                     json=self.encode(request), headers=headers)
        if response.status_code == 429:
            raise RateLimited(response.text[:200])
        if response.status_code < 200 or response.status_code >= 300:
            raise GatewayError(response.status_code, response.text[:200])
        try:
            reply = response.json()
        except json.JSONDecodeError as exc:
            raise MalformedReply(f"reply is not JSON: {exc}") from exc
        return self.decode(reply, request)


# --- N-version programming ---------------------------------------------------

@dataclass(frozen=True)
class Agreed:
    text: str
    failures: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Disagreement:
    answers: tuple[tuple[str, str], ...]  # (backend id, raw text)
    failures: tuple[tuple[str, str], ...] = ()


def n_version(backends: Sequence[Backend], request: ModelRequest,
              aggregator: str = "majority") -> Agreed | Disagreement:
    """Query all backends; mask faults only under strict majority agreement.

    A backend that errors casts no vote but is reported in failures.
    """
    if len(backends) < 2:
        raise ValueError("n_version needs at least 2 backends")
    if aggregator != "majority":
        raise ValueError(f"unknown aggregator: {aggregator}")

    answers: list[tuple[str, str]] = []
    failures: list[tuple[str, str]] = []
    for backend in backends:
        try:
            answers.append((backend.descriptor.id, complete(backend, request).text))
        except Exception as exc:  # recorded per-backend, counted as no vote
            failures.append((backend.descriptor.id, str(exc)))

    tally: dict[str, int] = {}
    for _, text in answers:
        key = canonical_answer(text)
        tally[key] = tally.get(key, 0) + 1
    total = len(answers)
    for key, count in tally.items():
        if count * 2 > total:
            return Agreed(text=key, failures=tuple(failures))
    return Disagreement(answers=tuple(answers), failures=tuple(failures))
