"""Pluggable generation backends and order-preserving batch inference.

Three backends cover the pipeline's needs: replay (prerecorded
responses for deterministic offline runs), mock (templated synthetic
text), and live (a thin HTTP adapter for a hosted model endpoint).
"""

from __future__ import annotations

import base64
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .errors import (
    BackendUnavailable,
    CooktuneError,
    EmptyInput,
    GenerationFailed,
    MediaNotFound,
)
from .jsonio import read_jsonl, write_jsonl
from .youcook2 import EvalItem

logger = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "BACKEND_AUTH_TOKEN"


@dataclass(frozen=True)
class GenerationRequest:
    item_id: str
    prompt: str
    media_kind: str = "none"  # "video", "image", or "none"
    media_ref: str | None = None
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelResponse:
    item_id: str
    text: str
    backend_name: str
    latency_ms: int


@dataclass(frozen=True)
class InferenceSummary:
    ok: int
    failed: int


class Backend:
    """Stateless text generation seam.

    ``deterministic`` backends report latency_ms = 0 so reruns are
    byte-identical; ``max_parallelism`` of None means any worker count
    is safe.
    """

    name = "backend"
    deterministic = False
    max_parallelism: int | None = None

    def complete(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class ReplayBackend(Backend):
    """Serves prerecorded responses from a JSONL file of {item_id, text}."""

    name = "replay"
    deterministic = True

    def __init__(self, path: str | Path) -> None:
        self._responses: dict[str, str] = {}
        for row in read_jsonl(path):
            if "item_id" in row and "text" in row:
                self._responses[str(row["item_id"])] = str(row["text"])

    def complete(self, request: GenerationRequest) -> str:
        try:
            return self._responses[request.item_id]
        except KeyError:
            raise GenerationFailed(
                f"no recorded response for item '{request.item_id}'"
            ) from None


class MockBackend(Backend):
    """Deterministic synthesized text from a fixed template.

    The template may use {stem} (media file stem, falling back to the
    item id), {item_id}, and {prompt}.
    """

    name = "mock"
    deterministic = True

    def __init__(self, template: str = "RECIPE FOR {stem}") -> None:
        self.template = template

    def complete(self, request: GenerationRequest) -> str:
        stem = Path(request.media_ref).stem if request.media_ref else request.item_id
        return self.template.format(
            stem=stem, item_id=request.item_id, prompt=request.prompt
        )


class HttpBackend(Backend):
    """POSTs {prompt, media_url or media_b64, params} and expects {text}.

    A bearer token is read from the BACKEND_AUTH_TOKEN environment
    variable when present. Local media paths are inlined base64; http(s)
    references are passed through as media_url.
    """

    name = "live"
    deterministic = False

    def __init__(
        self,
        url: str,
        *,
        timeout_s: float = 60.0,
        session: requests.Session | None = None,
    ) -> None:
        self.url = url
        self.timeout_s = timeout_s
        self._session = session

    def complete(self, request: GenerationRequest) -> str:
        payload: dict[str, object] = {
            "prompt": request.prompt,
            "params": dict(request.params),
        }
        if request.media_ref is not None:
            if request.media_ref.startswith(("http://", "https://")):
                payload["media_url"] = request.media_ref
            else:
                payload["media_b64"] = _encode_media(request.media_ref)
        headers = {}
        token = os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        poster = self._session if self._session is not None else requests
        try:
            response = poster.post(
                self.url, json=payload, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"cannot reach {self.url}: {exc}") from exc
        if response.status_code != 200:
            raise GenerationFailed(f"endpoint returned status {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise GenerationFailed("endpoint returned non-JSON body") from exc
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not text.strip():
            raise GenerationFailed("endpoint reply lacks a text field")
        return text


def _encode_media(path: str) -> str:
    media = Path(path)
    if not media.is_file():
        raise MediaNotFound(f"media file {path} does not exist")
    return base64.b64encode(media.read_bytes()).decode("ascii")


def generate(backend: Backend, request: GenerationRequest) -> ModelResponse:
    """Run one request, enforcing nonempty text and measuring latency."""
    if (request.media_ref is not None) != (request.media_kind != "none"):
        raise ValueError("media_ref must be present exactly when media_kind is not 'none'")
    started = time.perf_counter()
    text = backend.complete(request)
    if not text or not text.strip():
        raise GenerationFailed(f"backend returned empty text for item '{request.item_id}'")
    latency_ms = 0 if backend.deterministic else int((time.perf_counter() - started) * 1000)
    return ModelResponse(
        item_id=request.item_id,
        text=text,
        backend_name=backend.name,
        latency_ms=latency_ms,
    )


def run_inference(
    backend: Backend,
    items: Sequence[EvalItem],
    out_path: str | Path,
    *,
    parallelism: int = 4,
    params: Mapping[str, object] | None = None,
    media_resolver: Callable[[str], str] | None = None,
) -> InferenceSummary:
    """Generate a response per item and write responses JSONL.

    Rows keep input item order at every parallelism level. Failures are
    recorded as {item_id, error} rows and the run continues.
    """
    if not items:
        raise EmptyInput("no items to run")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if backend.max_parallelism is not None:
        parallelism = min(parallelism, backend.max_parallelism)

    requests_list = [
        GenerationRequest(
            item_id=item.item_id,
            prompt=item.question,
            media_kind="video",
            media_ref=media_resolver(item.video_id) if media_resolver else item.video_id,
            params=dict(params or {}),
        )
        for item in items
    ]

    def worker(request: GenerationRequest) -> dict:
        try:
            response = generate(backend, request)
        except CooktuneError as exc:
            logger.warning("item %s failed: %s", request.item_id, exc)
            return {"item_id": request.item_id, "error": f"{type(exc).__name__}: {exc}"}
        return {
            "item_id": response.item_id,
            "text": response.text,
            "backend_name": response.backend_name,
            "latency_ms": response.latency_ms,
        }

    if parallelism == 1:
        rows = [worker(request) for request in requests_list]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(worker, requests_list))

    write_jsonl(out_path, rows)
    failed = sum(1 for row in rows if "error" in row)
    return InferenceSummary(ok=len(rows) - failed, failed=failed)
