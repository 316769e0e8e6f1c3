"""HTTP client for chat-completion endpoints (annotator and judge models).

Requests are cached by content hash under cache/<sha256>.resp, so re-running
a completed batch issues zero network calls. Auth tokens come from the
environment only; profiles never store secrets.
"""

from __future__ import annotations

import base64
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .errors import AuthError, EndpointError
from .records import canonical_json, sha256_hex

RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointProfile:
    base_url: str
    model: str
    auth_env: str = ""  # name of the env var holding the bearer token
    concurrency: int = 4
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 60.0
    image_mode: str = "base64"  # attach images as base64 data URIs or raw URLs

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def image_content(path_or_url: str, mode: str) -> dict:
    if mode == "url":
        return {"type": "image_url", "image_url": {"url": str(path_or_url)}}
    data = base64.b64encode(Path(path_or_url).read_bytes()).decode()
    suffix = Path(path_or_url).suffix.lstrip(".").lower() or "png"
    if suffix == "jpg":
        suffix = "jpeg"
    return {"type": "image_url", "image_url": {"url": f"data:image/{suffix};base64,{data}"}}


def user_message(text: str, image: str | None = None, image_mode: str = "base64") -> dict:
    if image is None:
        return {"role": "user", "content": text}
    return {
        "role": "user",
        "content": [{"type": "text", "text": text}, image_content(image, image_mode)],
    }


@dataclass
class ChatResult:
    text: str
    attempts: int
    from_cache: bool


class ChatClient:
    """Synchronous chat-completion client with retry, backoff, and caching."""

    def __init__(
        self,
        profile: EndpointProfile,
        cache_dir: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.profile = profile
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._sleep = sleep
        self._http = httpx.Client(transport=transport, timeout=profile.timeout)
        self.network_calls = 0

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.profile.auth_env:
            token = os.environ.get(self.profile.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _cache_path(self, payload: dict) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{sha256_hex(canonical_json(payload))}.resp"

    def complete(self, messages: Sequence[dict]) -> ChatResult:
        """One chat completion; returns cached text when available."""
        payload = {"model": self.profile.model, "messages": list(messages)}
        cache_path = self._cache_path(payload)
        if cache_path is not None and cache_path.exists():
            return ChatResult(text=cache_path.read_text(), attempts=0, from_cache=True)

        url = self.profile.base_url.rstrip("/") + "/chat/completions"
        last_error = "no attempt made"
        attempts = 0
        for attempt in range(self.profile.max_retries + 1):
            attempts = attempt + 1
            try:
                self.network_calls += 1
                resp = self._http.post(url, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"{url}: authentication failed ({resp.status_code})")
                if resp.status_code == 200:
                    text = self._extract(resp)
                    if cache_path is not None:
                        cache_path.write_text(text)
                    return ChatResult(text=text, attempts=attempts, from_cache=False)
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in RETRYABLE_STATUS:
                    raise EndpointError(f"{url}: {last_error}")
            if attempt < self.profile.max_retries:
                self._sleep(self.profile.backoff_base * (2**attempt))
        raise EndpointError(f"{url}: exhausted {attempts} attempts; last: {last_error}")

    @staticmethod
    def _extract(resp: httpx.Response) -> str:
        try:
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise EndpointError(f"malformed completion response: {exc}") from exc


def run_batch(items: Sequence, fn: Callable, concurrency: int) -> list:
    """Apply fn over items with at most `concurrency` in flight.

    Returns (item, result_or_exception) pairs in input order; AuthError is
    fatal and re-raised after the pool drains.
    """
    results: list = [None] * len(items)
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
        for future, i in futures.items():
            try:
                results[i] = (items[i], future.result())
            except Exception as exc:  # noqa: BLE001 - per-item failures must not kill the run
                results[i] = (items[i], exc)
    for _, outcome in results:
        if isinstance(outcome, AuthError):
            raise outcome
    return results
