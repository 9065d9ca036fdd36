"""Transport layer: chat-completions backend client, classifier endpoint
client, a file-backed canned backend, and URL-based construction.

Backend URLs understood by :func:`backend_from_url`:

* ``http(s)://host`` - real chat-completions service
* ``file:///path/to/canned.json`` - deterministic canned responses
* ``mock://identity`` / ``mock://strip?token=cf`` - in-process mocks

Classifier URLs (:func:`classifier_from_url`) accept ``http(s)://`` or the
``mock://keyword`` / ``mock://trojan`` / ``mock://constant`` schemes.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import parse_qs, urlparse, unquote

import httpx

from . import mocks
from .attacksim import ClassifierError, ClassifierOracle
from .reformulate import (
    BackendProtocolError,
    BackendRefusal,
    BackendTimeout,
    GenerationParams,
    LlmBackend,
)

API_KEY_ENV = "REFORMGUARD_API_KEY"


class HttpChatBackend:
    """Client for a chat-completions-compatible service.

    Sends ``POST {base_url}/v1/chat/completions`` with the prompt as a single
    user message and reads ``choices[0].message.content``. The bearer token is
    taken from the ``REFORMGUARD_API_KEY`` environment variable unless given
    explicitly.
    """

    def __init__(self, base_url: str, api_key: str | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = httpx.Client(base_url=self.base_url, transport=transport)

    def complete(self, prompt: str, params: GenerationParams) -> str:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body = {
            "model": params.model_name,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = self._client.post("/v1/chat/completions", json=body,
                                     headers=headers, timeout=params.timeout)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"no response within {params.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise BackendProtocolError(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise BackendProtocolError(f"backend returned HTTP {resp.status_code}")
        try:
            message = resp.json()["choices"][0]["message"]
            content = message["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendProtocolError("malformed chat-completions response") from exc
        if content is None or not str(content).strip():
            raise BackendRefusal("backend returned an empty completion")
        return str(content)


def request_key(prompt: str, params: GenerationParams) -> str:
    """Stable hash identifying a completion request, used by canned backends."""
    payload = json.dumps(
        {"model": params.model_name, "temperature": params.temperature, "prompt": prompt},
        sort_keys=True, ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class MockFileBackend:
    """Deterministic backend replaying canned responses keyed by request hash."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._canned: dict[str, str] = json.loads(self.path.read_text(encoding="utf-8"))

    def complete(self, prompt: str, params: GenerationParams) -> str:
        key = request_key(prompt, params)
        try:
            return self._canned[key]
        except KeyError:
            raise BackendProtocolError(f"no canned response for request {key[:12]}") from None


def save_canned_responses(
    path: str | Path,
    entries: Sequence[tuple[str, GenerationParams, str]],
) -> None:
    """Write a canned-response file for :class:`MockFileBackend`."""
    canned = {request_key(prompt, params): response for prompt, params, response in entries}
    Path(path).write_text(json.dumps(canned, ensure_ascii=False, indent=0),
                          encoding="utf-8")


class CallableBackend:
    """Adapter turning a plain ``(prompt, params) -> str`` function into a backend."""

    def __init__(self, fn: Callable[[str, GenerationParams], str]):
        self._fn = fn

    def complete(self, prompt: str, params: GenerationParams) -> str:
        return self._fn(prompt, params)


class HttpClassifier:
    """Client for the classifier endpoint: ``POST {base_url}/classify``."""

    def __init__(self, base_url: str, timeout: float = 30.0,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._client = httpx.Client(base_url=self.base_url, transport=transport)

    def classify(self, texts: Sequence[str]) -> list[tuple[int, list[float] | None]]:
        try:
            resp = self._client.post("/classify", json={"texts": list(texts)},
                                     timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise ClassifierError(f"classifier unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ClassifierError(f"classifier returned HTTP {resp.status_code}")
        try:
            data = resp.json()
            labels = data["labels"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ClassifierError("malformed classifier response") from exc
        if len(labels) != len(texts):
            raise ClassifierError(f"classifier returned {len(labels)} labels for "
                                  f"{len(texts)} texts")
        scores = data.get("scores")
        return [
            (int(label), list(scores[i]) if scores is not None else None)
            for i, label in enumerate(labels)
        ]


def _query(url) -> dict[str, str]:
    return {k: v[-1] for k, v in parse_qs(url.query).items()}


def backend_from_url(url: str) -> LlmBackend:
    """Construct a reformulation backend from a URL (see module docstring)."""
    parsed = urlparse(url)
    if parsed.scheme in ("http", "https"):
        return HttpChatBackend(url)
    if parsed.scheme == "file":
        return MockFileBackend(unquote(parsed.path))
    if parsed.scheme == "mock":
        kind = parsed.netloc
        opts = _query(parsed)
        if kind == "identity":
            return mocks.IdentityBackend()
        if kind == "strip":
            return mocks.TokenStripBackend(token=opts.get("token", "cf"))
        raise ValueError(f"unknown mock backend {kind!r}")
    raise ValueError(f"unsupported backend URL {url!r}")


def classifier_from_url(url: str) -> ClassifierOracle:
    """Construct a classifier oracle from a URL (see module docstring)."""
    parsed = urlparse(url)
    if parsed.scheme in ("http", "https"):
        return HttpClassifier(url)
    if parsed.scheme == "mock":
        kind = parsed.netloc
        opts = _query(parsed)
        num_classes = int(opts.get("classes", 2))
        if kind == "keyword":
            return mocks.KeywordClassifier(
                token=opts.get("token", "good"),
                label=int(opts.get("label", 1)),
                default=int(opts.get("default", 0)),
                num_classes=num_classes,
            )
        if kind == "trojan":
            return mocks.TrojanKeywordClassifier(
                trigger=opts.get("trigger", "cf"),
                target=int(opts.get("target", 0)),
                token=opts.get("token", "good"),
                label=int(opts.get("label", 1)),
                default=int(opts.get("default", 0)),
                num_classes=num_classes,
            )
        if kind == "constant":
            return mocks.ConstantClassifier(label=int(opts.get("label", 0)),
                                            num_classes=num_classes)
        raise ValueError(f"unknown mock classifier {kind!r}")
    raise ValueError(f"unsupported classifier URL {url!r}")
