"""HTTP chat-gateway client with transcript record and replay.

The request body follows the widely implemented chat-completions shape:
``{"model", "messages", "temperature", "max_tokens"}`` where each message
content is a list of typed parts.  Image parts are sent as data URLs.  The
raw response body is what gets stored in the transcript, so replay exercises
the same parsing path as a live call.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from ..replay import ResponseStore, resolve_via

logger = logging.getLogger(__name__)

TOKEN_ENV = "GEOSECTOR_GATEWAY_TOKEN"

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_RETRIES = 3
RETRY_BACKOFF_S = 2.0
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class GatewayError(RuntimeError):
    """A gateway call failed after exhausting retries, or returned junk."""


@dataclass
class GatewayResponse:
    """One completion: its text, reported token usage, and wall time."""

    text: str
    usage: dict = field(default_factory=dict)
    elapsed_s: float = 0.0


def _wire_part(part: dict) -> dict:
    if part.get("type") == "image":
        url = "data:%s;base64,%s" % (part["media_type"], part["data"])
        return {"type": "image_url", "image_url": {"url": url}}
    return {"type": "text", "text": part.get("text", "")}


def _wire_messages(messages: list[dict]) -> list[dict]:
    return [
        {"role": m["role"], "content": [_wire_part(p) for p in m["content"]]}
        for m in messages
    ]


def _completion_text(payload: dict) -> str:
    choices = payload.get("choices")
    if isinstance(choices, list) and choices:
        message = choices[0].get("message", {})
        content = message.get("content")
        if isinstance(content, str):
            return content
        if isinstance(content, list):
            texts = [p.get("text", "") for p in content if isinstance(p, dict)]
            return "".join(texts)
    completion = payload.get("completion")
    if isinstance(completion, str):
        return completion
    raise GatewayError("response carries no completion text")


class ChatGateway:
    """Client for a chat endpoint, optionally backed by a transcript store.

    With a store in replay mode no network access happens at all; in record
    mode live responses are captured keyed by the full request so later runs
    replay byte-identically.  The bearer credential comes from the
    environment and is never written anywhere.
    """

    def __init__(
        self,
        url: str,
        model_id: str,
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        store: ResponseStore | None = None,
        transcript_dir: str | Path | None = None,
        mode: str = "record",
        session: requests.Session | None = None,
    ) -> None:
        if store is not None and transcript_dir is not None:
            raise ValueError("pass either store or transcript_dir, not both")
        if transcript_dir is not None:
            store = ResponseStore(transcript_dir, mode=mode)
        self.url = url
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout_s = timeout_s
        self.retries = retries
        self.store = store
        self.session = session

    def _canonical_request(self, messages: list[dict], max_tokens: int) -> str:
        body = {
            "model": self.model_id,
            "temperature": self.temperature,
            "max_tokens": max_tokens,
            "messages": messages,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def request_key(self, messages: list[dict], max_tokens: int | None = None) -> str:
        """Transcript key for a prompt, usable to script replay stores."""
        canonical = self._canonical_request(messages, max_tokens or self.max_tokens)
        return ResponseStore.key_for("chat", canonical)

    def _post(self, messages: list[dict], max_tokens: int) -> bytes:
        body = {
            "model": self.model_id,
            "messages": _wire_messages(messages),
            "temperature": self.temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = "Bearer %s" % token
        poster = self.session.post if self.session is not None else requests.post
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(RETRY_BACKOFF_S * (2 ** (attempt - 1)))
            try:
                response = poster(
                    self.url, json=body, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("gateway request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_error = GatewayError(
                    "gateway returned status %d" % response.status_code
                )
                logger.warning(
                    "gateway status %d (attempt %d)", response.status_code, attempt + 1
                )
                continue
            if response.status_code != 200:
                raise GatewayError(
                    "gateway returned status %d: %s"
                    % (response.status_code, response.text[:300])
                )
            return response.content
        raise GatewayError("gateway unreachable after %d attempts: %s" % (self.retries + 1, last_error))

    def complete(self, messages: list[dict], max_tokens: int | None = None) -> GatewayResponse:
        """Run one chat completion, via transcript store when configured."""
        tokens = max_tokens or self.max_tokens
        canonical = self._canonical_request(messages, tokens)
        started = time.monotonic()

        def live() -> bytes:
            return self._post(messages, tokens)

        body = resolve_via(self.store, ("chat", canonical), live)
        elapsed = time.monotonic() - started

        try:
            payload = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GatewayError("gateway response is not JSON: %s" % exc) from exc
        text = _completion_text(payload)
        usage = payload.get("usage")
        if not isinstance(usage, dict):
            usage = {}
        return GatewayResponse(text=text, usage=usage, elapsed_s=elapsed)
