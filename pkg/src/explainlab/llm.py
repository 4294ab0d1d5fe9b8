"""OpenAI-compatible chat-completions client with pluggable transports.

The wire format is the compatible subset only: a single POST to
``{base_url}/chat/completions`` carrying model, messages, temperature and
max_tokens, authorized by a bearer key resolved from the environment.
Transports are injectable so deterministic stubs substitute for the real
HTTP client in tests and demos.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Mapping, Protocol

import httpx

from .errors import ConfigurationError, MalformedResponseError, ProviderError

DEFAULT_TIMEOUT_SECONDS = 30.0


@dataclass(frozen=True)
class LlmConfig:
    """Where and how to call one model; the key itself never lives here."""

    provider_base_url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    api_key_ref: str = "OPENAI_API_KEY"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LlmConfig":
        from .model import _Reader, _require_clean  # local import avoids a cycle

        problems: list[str] = []
        r = _Reader(data, "", problems)
        base_url = r.str_("provider_base_url", allow_empty=False)
        model_name = r.str_("model_name", allow_empty=False)
        temperature = r.num("temperature", required=False, default=0.0)
        max_tokens = r.int_("max_output_tokens", required=False, default=512)
        api_key_ref = r.str_("api_key_ref", allow_empty=False)
        if temperature < 0:
            problems.append("temperature: must be >= 0")
        if max_tokens < 1:
            problems.append("max_output_tokens: must be a positive integer")
        r.reject_unknown(
            ("provider_base_url", "model_name", "temperature", "max_output_tokens", "api_key_ref")
        )
        _require_clean(problems)
        return cls(
            provider_base_url=base_url,
            model_name=model_name,
            temperature=temperature,
            max_output_tokens=max_tokens,
            api_key_ref=api_key_ref,
        )

    def to_dict(self) -> dict:
        return {
            "provider_base_url": self.provider_base_url,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "api_key_ref": self.api_key_ref,
        }


@dataclass(frozen=True)
class TransportReply:
    status_code: int
    text: str


class Transport(Protocol):
    def post(self, url: str, headers: Mapping[str, str], body: Mapping[str, Any]) -> TransportReply:
        ...


class HttpTransport:
    """Real network transport; raises ProviderError(retriable=True) on I/O failure."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT_SECONDS):
        self._client = httpx.Client(timeout=timeout)

    def post(self, url: str, headers: Mapping[str, str], body: Mapping[str, Any]) -> TransportReply:
        try:
            response = self._client.post(url, headers=dict(headers), json=dict(body))
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", retriable=True) from exc
        return TransportReply(status_code=response.status_code, text=response.text)

    def close(self) -> None:
        self._client.close()


def completion_body(content: str) -> str:
    """A minimal chat-completions response carrying one assistant message."""
    return json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})


class EchoTransport:
    """Stub provider that answers with the last user message's content."""

    def post(self, url: str, headers: Mapping[str, str], body: Mapping[str, Any]) -> TransportReply:
        user_turns = [m["content"] for m in body.get("messages", []) if m.get("role") == "user"]
        return TransportReply(status_code=200, text=completion_body(user_turns[-1] if user_turns else ""))


class ScriptedTransport:
    """Stub provider replaying a fixed script.

    Script entries: a str becomes a 200 completion with that content; an
    int becomes that HTTP status with an empty JSON body; an Exception is
    raised as-is; a (status, body) tuple is returned verbatim. The last
    entry repeats once the script is exhausted.
    """

    def __init__(self, script: list):
        if not script:
            raise ValueError("script must not be empty")
        self._script = list(script)
        self._cursor = 0

    def post(self, url: str, headers: Mapping[str, str], body: Mapping[str, Any]) -> TransportReply:
        entry = self._script[min(self._cursor, len(self._script) - 1)]
        self._cursor += 1
        if isinstance(entry, Exception):
            raise entry
        if isinstance(entry, int):
            return TransportReply(status_code=entry, text="{}")
        if isinstance(entry, tuple):
            status, text = entry
            return TransportReply(status_code=status, text=text)
        return TransportReply(status_code=200, text=completion_body(entry))


class CountingTransport:
    """Wraps another transport and counts requests plus captured bodies."""

    def __init__(self, inner: Transport):
        self.inner = inner
        self.calls = 0
        self.requests: list[dict] = []

    def post(self, url: str, headers: Mapping[str, str], body: Mapping[str, Any]) -> TransportReply:
        self.calls += 1
        self.requests.append({"url": url, "body": dict(body)})
        return self.inner.post(url, headers, body)


def resolve_api_key(config: LlmConfig, secrets: Mapping[str, str] | None = None) -> str:
    env = os.environ if secrets is None else secrets
    key = env.get(config.api_key_ref)
    if not key:
        raise ConfigurationError(f"secret {config.api_key_ref!r} is not set")
    return key


def send_chat_completion(
    messages: list[dict],
    config: LlmConfig,
    transport: Transport,
    secrets: Mapping[str, str] | None = None,
) -> str:
    """Issues one chat-completions request and returns the first choice's content."""
    key = resolve_api_key(config, secrets)
    url = config.provider_base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    reply = transport.post(url, headers, body)

    if not (200 <= reply.status_code < 300):
        retriable = reply.status_code == 429 or reply.status_code >= 500
        raise ProviderError(
            f"provider returned status {reply.status_code}",
            status=reply.status_code,
            retriable=retriable,
            body_excerpt=reply.text[:200],
        )
    try:
        parsed = json.loads(reply.text)
    except json.JSONDecodeError as exc:
        raise MalformedResponseError(
            f"provider response is not JSON: {exc}", body_excerpt=reply.text[:200]
        ) from exc
    choices = parsed.get("choices") if isinstance(parsed, dict) else None
    if not choices:
        raise MalformedResponseError("provider response has no choices", body_excerpt=reply.text[:200])
    message = choices[0].get("message") if isinstance(choices[0], dict) else None
    content = message.get("content") if isinstance(message, dict) else None
    if not isinstance(content, str):
        raise MalformedResponseError(
            "provider response has no message content", body_excerpt=reply.text[:200]
        )
    return content
