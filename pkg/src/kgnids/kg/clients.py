"""Thin clients for code search, chat completion and text embedding services."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

from .transport import RateLimiter, Transport, TransportError

logger = logging.getLogger(__name__)

GITHUB_API = "https://api.github.com"
DEFAULT_LM_BASE_URL = "https://api.openai.com/v1"


class RateLimitError(TransportError):
    def __init__(self, query: str, attempts: int):
        self.query = query
        self.attempts = attempts
        super().__init__(f"rate limited on query {query!r} after {attempts} attempts")


class ServiceError(TransportError):
    pass


@dataclass
class SearchHit:
    uri: str
    title: str
    description: str


class SearchClient:
    """Repository search against a GitHub-style ``/search/repositories`` endpoint.

    The response may be GitHub's ``{"items": [...]}`` envelope or a bare list of
    ``{uri, title, description}`` objects.
    """

    def __init__(self, transport: Transport, base_url: str = GITHUB_API, token: str | None = None,
                 per_page: int = 100, max_pages: int = 1, max_attempts: int = 3,
                 backoff: float = 2.0, sleep=time.sleep, limiter: RateLimiter | None = None):
        self.transport = transport
        self.base_url = base_url.rstrip("/")
        self.token = token if token is not None else os.environ.get("KGNIDS_SEARCH_TOKEN")
        self.per_page = per_page
        self.max_pages = max_pages
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep
        self.limiter = limiter or RateLimiter()

    def _headers(self):
        headers = {"Accept": "application/vnd.github+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _get(self, url, params, label, missing_ok=False):
        for attempt in range(1, self.max_attempts + 1):
            self.limiter.wait()
            resp = self.transport.send({"method": "GET", "url": url, "params": params,
                                        "headers": self._headers()})
            status = resp.get("status", 200)
            if status in (403, 429):
                logger.warning("rate limited on %r (attempt %d/%d)", label, attempt, self.max_attempts)
                if attempt < self.max_attempts:
                    retry_after = (resp.get("headers") or {}).get("Retry-After")
                    self.sleep(float(retry_after) if retry_after else self.backoff * 2 ** (attempt - 1))
                continue
            if status == 404 and missing_ok:
                return None
            if status >= 400:
                raise ServiceError(f"search {label!r} failed with HTTP {status}")
            return resp
        raise RateLimitError(label, self.max_attempts)

    def search(self, keyword: str) -> list[SearchHit]:
        hits = []
        for page in range(1, self.max_pages + 1):
            params = {"q": f"{keyword} in:name,description", "per_page": self.per_page, "page": page}
            body = self._get(f"{self.base_url}/search/repositories", params, keyword).get("json")
            items = body.get("items", []) if isinstance(body, dict) else (body or [])
            for item in items:
                hits.append(SearchHit(
                    uri=item.get("uri") or item.get("html_url") or "",
                    title=item.get("title") or item.get("full_name") or item.get("name") or "",
                    description=item.get("description") or ""))
            if len(items) < self.per_page:
                break
        return hits

    def readme(self, uri: str) -> str:
        """Raw README text of a repository, or "" when it has none."""
        path = uri.rstrip("/").split("github.com/")[-1]
        resp = self._get(f"{self.base_url}/repos/{path}/readme", None, uri, missing_ok=True) if path else None
        if resp is None:
            return ""
        body = resp.get("json")
        if isinstance(body, dict) and body.get("encoding") == "base64":
            import base64
            return base64.b64decode(body.get("content", "")).decode("utf-8", "replace")
        return resp.get("text", "") or (body if isinstance(body, str) else "")


class ChatClient:
    def __init__(self, transport: Transport, model: str = "gpt-4o-mini", base_url: str | None = None,
                 api_key: str | None = None, temperature: float = 0.0, seed: int = 0,
                 limiter: RateLimiter | None = None):
        self.transport = transport
        self.model = model
        self.base_url = (base_url or os.environ.get("KGNIDS_LM_BASE_URL") or DEFAULT_LM_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("KGNIDS_LM_API_KEY")
        self.temperature = temperature
        self.seed = seed
        self.limiter = limiter or RateLimiter()

    def complete(self, messages: list[dict], *, json_mode: bool = False, max_tokens: int | None = None,
                 logit_bias: dict | None = None) -> str:
        payload = {"model": self.model, "messages": list(messages),
                   "temperature": self.temperature, "seed": self.seed}
        if json_mode:
            payload["response_format"] = {"type": "json_object"}
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        if logit_bias:
            payload["logit_bias"] = logit_bias
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self.limiter.wait()
        resp = self.transport.send({"method": "POST", "url": f"{self.base_url}/chat/completions",
                                    "headers": headers, "json": payload})
        if resp.get("status", 200) >= 400:
            raise ServiceError(f"chat completion failed with HTTP {resp.get('status')}")
        try:
            return resp["json"]["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ServiceError(f"unexpected completion payload: {exc!r}") from exc


class EmbeddingClient:
    def __init__(self, transport: Transport, model: str = "text-embedding-3-small",
                 base_url: str | None = None, api_key: str | None = None, batch_size: int = 256,
                 limiter: RateLimiter | None = None):
        self.transport = transport
        self.model = model
        self.base_url = (base_url or os.environ.get("KGNIDS_LM_BASE_URL") or DEFAULT_LM_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("KGNIDS_LM_API_KEY")
        self.batch_size = batch_size
        self.limiter = limiter or RateLimiter()

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        for start in range(0, len(texts), self.batch_size):
            batch = texts[start:start + self.batch_size]
            self.limiter.wait()
            resp = self.transport.send({"method": "POST", "url": f"{self.base_url}/embeddings",
                                        "headers": headers, "json": {"model": self.model, "input": batch}})
            if resp.get("status", 200) >= 400:
                raise ServiceError(f"embedding request failed with HTTP {resp.get('status')}")
            data = sorted(resp["json"]["data"], key=lambda d: d.get("index", 0))
            if len(data) != len(batch):
                raise ServiceError(f"expected {len(batch)} embeddings, got {len(data)}")
            out.extend(d["embedding"] for d in data)
        return out
