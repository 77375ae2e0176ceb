"""Record/replay fixture stores plus a retrying HTTP helper.

Every network-touching stage (tiles, text sources, model gateway) resolves
through a ResponseStore so the full pipeline can run hermetically: record mode
fills the store from live responses, replay mode serves only from disk.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

MODE_RECORD = "record"
MODE_REPLAY = "replay"

_KEY_SEPARATOR = "\x1f"


class ReplayMiss(LookupError):
    """Replay mode was asked for a response that was never recorded."""


class FetchError(RuntimeError):
    """HTTP request failed after all retry attempts."""

    def __init__(self, url: str, message: str):
        super().__init__(f"{url}: {message}")
        self.url = url


class ResponseStore:
    """Disk-backed response bodies keyed by a hash of request identity parts."""

    def __init__(self, root: str | Path, mode: str):
        if mode not in (MODE_RECORD, MODE_REPLAY):
            raise ValueError(f"unknown store mode {mode!r}")
        self.root = Path(root)
        self.mode = mode
        if mode == MODE_RECORD:
            self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(*parts: str) -> str:
        joined = _KEY_SEPARATOR.join(parts)
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.bin"

    def load(self, key: str) -> bytes | None:
        path = self._path(key)
        if not path.exists():
            return None
        return path.read_bytes()

    def save(self, key: str, data: bytes) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)

    def resolve(self, parts: tuple[str, ...], fetch_fn) -> bytes:
        """Cached body for the request identity, fetching and recording on miss."""
        key = self.key_for(*parts)
        cached = self.load(key)
        if cached is not None:
            return cached
        if self.mode == MODE_REPLAY:
            raise ReplayMiss(f"no recorded response for {parts!r}")
        data = fetch_fn()
        self.save(key, data)
        return data


def resolve_via(store: ResponseStore | None, parts: tuple[str, ...], fetch_fn) -> bytes:
    """Resolve through the store when one is configured; live fetch otherwise."""
    if store is None:
        return fetch_fn()
    return store.resolve(parts, fetch_fn)


def default_user_agent() -> str:
    from geosector import __version__

    contact = os.environ.get("GEOSECTOR_CONTACT", "contact-not-set")
    return f"geosector/{__version__} ({contact})"


def http_get(
    url: str,
    *,
    headers: dict[str, str] | None = None,
    timeout: float = 30.0,
    retries: int = 3,
    backoff_s: float = 0.5,
    session: requests.Session | None = None,
) -> bytes:
    """GET with bounded retries; retries cover transport errors, 429 and 5xx."""
    send = (session or requests).get
    merged = {"User-Agent": default_user_agent()}
    if headers:
        merged.update(headers)
    last_error = ""
    for attempt in range(retries):
        try:
            response = send(url, headers=merged, timeout=timeout)
        except requests.RequestException as exc:
            last_error = str(exc)
        else:
            if response.status_code == 200:
                return response.content
            last_error = f"HTTP {response.status_code}"
            if response.status_code != 429 and response.status_code < 500:
                raise FetchError(url, last_error)
        if attempt + 1 < retries:
            time.sleep(backoff_s * (2**attempt))
    raise FetchError(url, f"{last_error} after {retries} attempts")
