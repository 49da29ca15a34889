"""Language-model and tool backends: HTTP clients plus strict scripted mocks."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol
from urllib.parse import quote_plus

import httpx

from . import jsonio
from .errors import BackendError, ToolBudgetExceeded, ToolError
from .prompts import classify_prompt, digest

log = logging.getLogger(__name__)


class LLMBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str) -> str: ...


class ToolSuite(Protocol):
    def search(self, query: str) -> list[dict[str, str]]: ...

    def url_context(self, url: str) -> str: ...


def complete(backend: LLMBackend, prompt: str) -> str:
    if not prompt:
        raise ValueError("prompt must be non-empty")
    return backend.complete(prompt)


# -- scripted mock -------------------------------------------------------------


class MockScript:
    """Deterministic prompt -> response lookup.

    Keys are tried in this order:

    * ``sha256:<hex>`` -- exact digest of the full prompt;
    * ``<kind>::<text>`` -- prompt kind (query_checklist, report_checklist, verify,
      judge, or ``repair:<kind>``) and a substring of that prompt's subject
      (query, report, claim or criterion); empty text matches any subject;
    * anything else -- substring of the whole prompt.

    Non-digest keys are scanned in declaration order and the first hit wins.
    A value of ``{"__sequence__": [...]}`` is replayed call by call, the last
    entry repeating. Other non-string values are returned as compact JSON.
    """

    def __init__(self, entries: Mapping[str, Any]):
        self._digests = {k: v for k, v in entries.items() if k.startswith("sha256:")}
        self._rules = [(k, v) for k, v in entries.items() if not k.startswith("sha256:")]
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path) -> "MockScript":
        return cls(json.loads(Path(path).read_text("utf-8")))

    def _render(self, key: str, value: Any) -> str:
        if isinstance(value, dict) and set(value) == {"__sequence__"}:
            seq = value["__sequence__"]
            with self._lock:
                n = self._counters.get(key, 0)
                self._counters[key] = n + 1
            value = seq[min(n, len(seq) - 1)]
        return value if isinstance(value, str) else jsonio.dumps(value)

    def lookup(self, prompt: str) -> str:
        d = digest(prompt)
        if d in self._digests:
            return self._render(d, self._digests[d])
        kind, subject = classify_prompt(prompt)
        for key, value in self._rules:
            if "::" in key:
                k, needle = key.split("::", 1)
                if k == kind and needle in subject:
                    return self._render(key, value)
            elif key in prompt:
                return self._render(key, value)
        raise BackendError("exhausted-script", f"no scripted response for {kind} prompt {d[:19]}")


class MockBackend:
    def __init__(self, script: MockScript | Mapping[str, Any], backend_id: str = "mock"):
        self.script = script if isinstance(script, MockScript) else MockScript(script)
        self.backend_id = backend_id
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(digest(prompt))
        return self.script.lookup(prompt)


# -- HTTP chat completion ------------------------------------------------------


@dataclass
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str | None = None
    timeout: float = 120.0
    max_retries: int = 3
    path: str = "/chat/completions"
    headers: dict[str, str] = field(default_factory=dict)
    temperature: float | None = 0.0
    max_concurrency: int = 4
    backoff: float = 1.0


class HTTPChatBackend:
    """Generic chat-completion client: POST {messages:[...]} -> choices[0].message.content."""

    def __init__(
        self,
        cfg: EndpointConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backend_id: str | None = None,
    ):
        if cfg.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.cfg = cfg
        self.backend_id = backend_id or f"http:{cfg.model_name}"
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max(1, cfg.max_concurrency))
        self.retries = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", **self.cfg.headers}
        if self.cfg.api_key_env:
            token = os.environ.get(self.cfg.api_key_env)
            if not token:
                raise BackendError("auth", f"environment variable {self.cfg.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, prompt: str) -> dict[str, Any]:
        body: dict[str, Any] = {"model": self.cfg.model_name, "messages": [{"role": "user", "content": prompt}]}
        if self.cfg.temperature is not None:
            body["temperature"] = self.cfg.temperature
        return body

    def complete(self, prompt: str) -> str:
        url = self.cfg.base_url.rstrip("/") + self.cfg.path
        headers = self._headers()
        last = "transport"
        with self._gate:
            for attempt in range(self.cfg.max_retries + 1):
                if attempt:
                    self.retries += 1
                    delay = self.cfg.backoff * 2 ** (attempt - 1)
                    log.warning("retry %d/%d for %s after %s (sleep %.2fs)", attempt, self.cfg.max_retries, self.backend_id, last, delay)
                    self._sleep(delay)
                try:
                    resp = self._client.post(url, json=self._payload(prompt), headers=headers, timeout=self.cfg.timeout)
                except httpx.TimeoutException:
                    last = "timeout"
                    continue
                except httpx.TransportError as e:
                    last = f"transport ({type(e).__name__})"
                    continue
                if resp.status_code in (401, 403):
                    raise BackendError("auth", f"HTTP {resp.status_code}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    raise BackendError("transport", f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    text = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    raise BackendError("transport", "malformed chat-completion payload") from None
                log.debug("%s request %s -> response %s", self.backend_id, digest(prompt)[:19], digest(text)[:19])
                return text
        if last == "timeout":
            raise BackendError("timeout", f"timed out after {self.cfg.max_retries + 1} attempt(s)")
        raise BackendError("exhausted", f"gave up after {self.cfg.max_retries + 1} attempt(s); last error {last}")


# -- tools ---------------------------------------------------------------------


def _norm_results(value: Any) -> list[dict[str, str]]:
    if isinstance(value, (str, dict)):
        value = [value]
    out = []
    for r in value:
        if isinstance(r, str):
            out.append({"title": "", "url": "", "snippet": r})
        else:
            out.append({"title": str(r.get("title", "")), "url": str(r.get("url", "")), "snippet": str(r.get("snippet", ""))})
    return out


class MockTools:
    """Scripted tool suite. ``search`` keys are case-insensitive query substrings; ``url_context`` keys are exact URLs.

    A value of ``{"error": kind}`` raises ToolError(kind). Unscripted inputs raise ToolError("not_scripted").
    """

    def __init__(self, script: Mapping[str, Any]):
        self._search = list((script.get("search") or {}).items())
        self._urls = dict(script.get("url_context") or {})

    @classmethod
    def load(cls, path: str | Path) -> "MockTools":
        return cls(json.loads(Path(path).read_text("utf-8")))

    def search(self, query: str) -> list[dict[str, str]]:
        q = query.lower()
        for needle, value in self._search:
            if needle.lower() in q:
                if isinstance(value, dict) and "error" in value:
                    raise ToolError(value["error"], query)
                return _norm_results(value)
        raise ToolError("not_scripted", query)

    def url_context(self, url: str) -> str:
        if url not in self._urls:
            raise ToolError("not_scripted", url)
        value = self._urls[url]
        if isinstance(value, dict) and "error" in value:
            raise ToolError(value["error"], url)
        return str(value)


class _TextExtractor(HTMLParser):
    def __init__(self) -> None:
        super().__init__()
        self.parts: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._skip += 1

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._skip:
            self._skip -= 1

    def handle_data(self, data):
        if not self._skip and data.strip():
            self.parts.append(data.strip())


def html_to_text(html: str) -> str:
    p = _TextExtractor()
    p.feed(html)
    return re.sub(r"\s+", " ", " ".join(p.parts)).strip()


@dataclass
class HttpTools:
    """``search_url`` is a template with a ``{query}`` placeholder returning JSON results."""

    search_url: str | None = None
    api_key_env: str | None = None
    timeout: float = 30.0
    max_chars: int = 20000
    client: httpx.Client | None = None

    def __post_init__(self) -> None:
        self._client = self.client or httpx.Client(timeout=self.timeout, follow_redirects=True)

    def _get(self, url: str, **kw: Any) -> httpx.Response:
        try:
            resp = self._client.get(url, timeout=self.timeout, **kw)
        except httpx.TimeoutException:
            raise ToolError("timeout", url) from None
        except httpx.HTTPError as e:
            raise ToolError("transport", f"{url}: {e}") from None
        if resp.status_code == 404:
            raise ToolError("not_found", url)
        if resp.status_code >= 400:
            raise ToolError(f"http_{resp.status_code}", url)
        return resp

    def search(self, query: str) -> list[dict[str, str]]:
        if not self.search_url:
            raise ToolError("unavailable", "no search endpoint configured")
        headers = {}
        if self.api_key_env and os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        resp = self._get(self.search_url.format(query=quote_plus(query)), headers=headers)
        try:
            data = resp.json()
        except ValueError:
            raise ToolError("malformed", "search endpoint did not return JSON") from None
        if isinstance(data, dict):
            data = data.get("results", [])
        return _norm_results(data)

    def url_context(self, url: str) -> str:
        resp = self._get(url)
        text = resp.text
        if "html" in resp.headers.get("content-type", ""):
            text = html_to_text(text)
        return text[: self.max_chars]


@dataclass
class ToolCall:
    tool: str
    input: str
    output_digest: str | None
    error: str | None = None
    output: str = ""

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"tool": self.tool, "input": self.input, "output_digest": self.output_digest}
        if self.error:
            d["error"] = self.error
        return d


class ToolSession:
    """Budgeted view of a ToolSuite for one claim. Failed calls consume budget too."""

    def __init__(self, tools: ToolSuite, budget: int = 5):
        if budget < 1:
            raise ValueError("tool budget must be >= 1")
        self.tools = tools
        self.budget = budget
        self.trace: list[ToolCall] = []

    @property
    def remaining(self) -> int:
        return self.budget - len(self.trace)

    def _call(self, tool: str, arg: str, fn: Callable[[str], Any]) -> Any:
        if self.remaining <= 0:
            raise ToolBudgetExceeded(self.budget)
        try:
            out = fn(arg)
        except ToolError as e:
            self.trace.append(ToolCall(tool, arg, None, error=e.kind))
            raise
        text = out if isinstance(out, str) else jsonio.dumps(out)
        self.trace.append(ToolCall(tool, arg, digest(text), output=text))
        return out

    def search(self, query: str) -> list[dict[str, str]]:
        return self._call("search", query, self.tools.search)

    def url_context(self, url: str) -> str:
        return self._call("url_context", url, self.tools.url_context)


def search(tools: ToolSession, query: str) -> list[dict[str, str]]:
    return tools.search(query)


def url_context(tools: ToolSession, url: str) -> str:
    return tools.url_context(url)
