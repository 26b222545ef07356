"""Uniform generation interface: remote chat endpoint or deterministic mock.

The wire protocol is the de-facto chat-completions shape (role-tagged
messages whose content is a list of text and image parts). The mock backend
implements the same shape in-process, which is what makes entire runs
byte-reproducible under a fixed seed list.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .dialects import Dialect, HistoryEntry
from .store import StepTask

#: Seed list applied round-by-round when the run config does not override it.
DEFAULT_SEEDS = (7278727, 7779397, 7771087, 7867747, 7977857, 5113051, 9581717, 20000303)

#: History screenshots older than this degrade to text-only renderings.
DEFAULT_IMAGE_BUDGET = 4


class EndpointUnavailableError(RuntimeError):
    """All retries exhausted against the remote endpoint."""


class UnresolvableObservationError(FileNotFoundError):
    """A step's screenshot reference cannot be resolved."""


class CacheConflictError(RuntimeError):
    """Two different payloads were stored under the same cache key."""


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.1
    top_p: float = 1.0
    top_k: int = -1
    repetition_penalty: float = 1.0
    presence_penalty: float = 0.0
    max_tokens: int = 2048
    n: int = 1
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p {self.top_p} outside (0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = ""
    model_name: str = "mock"
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    timeout: float = 120.0
    max_retries: int = 3
    max_in_flight: int = 4
    api_key_env: str = "TRAJKIT_API_KEY"

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    path: str


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[Message, ...]
    enable_thinking: bool = True
    fixed_thought: Optional[str] = None
    # Opaque routing tag (step key / round); scripted backends key off it.
    tag: str = ""

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request needs at least one user message")

    def joined_text(self) -> str:
        return "\n".join(
            p.text for m in self.messages for p in m.parts if isinstance(p, TextPart)
        )


def prepare_input(
    step: StepTask,
    history: Sequence[HistoryEntry],
    dialect: Dialect,
    enable_thinking: bool = True,
    fixed_thought: Optional[str] = None,
    image_budget: int = DEFAULT_IMAGE_BUDGET,
    check_screenshot: bool = True,
) -> GenerationRequest:
    """Assemble the chat request for one step.

    History text is always rendered in full; history screenshots are capped
    at ``image_budget`` most recent (older entries degrade to text only).
    The current screenshot is always attached.
    """
    ref = step.observation.screenshot_ref
    # Refs with a URI scheme are opaque handles; only plain paths are checked.
    if check_screenshot and "://" not in ref and not Path(ref).exists():
        raise UnresolvableObservationError(ref)

    entries = [dialect.render_history_entry(e) for e in history]
    history_text = " ".join(entries)

    parts: list[Part] = []
    with_images = [e for e in history if e.observation is not None][-image_budget:]
    for entry in with_images:
        parts.append(ImagePart(entry.observation.screenshot_ref))

    body = dialect.user_text(
        step.instruction_high, step.instruction_low, history_text, enable_thinking
    )
    parts.append(TextPart(body))
    parts.append(ImagePart(step.observation.screenshot_ref))
    if step.observation.text_desc:
        parts.append(TextPart(f"Screen description: {step.observation.text_desc}"))

    messages = (
        Message("system", (TextPart(dialect.system_text()),)),
        Message("user", tuple(parts)),
    )
    prefix = dialect.render_fixed_thought(fixed_thought) if fixed_thought is not None else None
    return GenerationRequest(
        messages=messages,
        enable_thinking=enable_thinking,
        fixed_thought=prefix,
        tag=step.key,
    )


# --- response cache ---------------------------------------------------------


class ResponseCache:
    """Thread-safe response store keyed by (step key, config hash, round, sample)."""

    def __init__(self) -> None:
        self._data: dict[tuple, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(step_key: str, cfg_hash: str, round_idx: int = 0, sample: int = 0) -> tuple:
        return (step_key, cfg_hash, round_idx, sample)

    def get(self, key: tuple) -> Optional[str]:
        with self._lock:
            value = self._data.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, key: tuple, payload: str) -> None:
        with self._lock:
            existing = self._data.get(key)
            if existing is not None and existing != payload:
                raise CacheConflictError(f"conflicting payloads for cache key {key}")
            self._data[key] = payload

    def __len__(self) -> int:
        return len(self._data)


def endpoint_config_hash(cfg: EndpointConfig, dialect_id: str, flags: Optional[dict] = None) -> str:
    payload = {
        "model": cfg.model_name,
        "sampling": cfg.sampling.__dict__,
        "dialect": dialect_id,
        "flags": flags or {},
    }
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# --- backends ---------------------------------------------------------------


class MockBackend:
    """Deterministic in-process backend driven by a responder function.

    ``responder(request, seed, n)`` returns one string or a list of ``n``
    strings. The backend tracks concurrency so tests can assert the
    admission limit, and counts calls so resume tests can assert zero
    re-generation.
    """

    def __init__(self, responder: Callable[[GenerationRequest, Optional[int], int],
                                           Union[str, list[str]]]):
        self.responder = responder
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight_seen = 0
        self._lock = threading.Lock()

    def complete(self, request: GenerationRequest, cfg: EndpointConfig) -> list[str]:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self.in_flight)
        try:
            out = self.responder(request, cfg.sampling.seed, cfg.sampling.n)
        finally:
            with self._lock:
                self.in_flight -= 1
        if isinstance(out, str):
            return [out] * cfg.sampling.n if cfg.sampling.n > 1 else [out]
        if len(out) != cfg.sampling.n:
            raise ValueError(f"responder returned {len(out)} strings for n={cfg.sampling.n}")
        return list(out)


class ScriptedBackend(MockBackend):
    """Mock backend reading responses from a pre-built ``tag -> response`` table."""

    def __init__(self, script: dict[str, Union[str, list[str]]]):
        self.script = dict(script)

        def responder(request: GenerationRequest, seed: Optional[int], n: int):
            try:
                entry = self.script[request.tag]
            except KeyError:
                raise KeyError(f"no scripted response for tag {request.tag!r}")
            if isinstance(entry, str):
                return [entry] * n if n > 1 else entry
            return entry[:n]

        super().__init__(responder)


class HttpBackend:
    """Chat-completions client with retry/backoff; errors surface verbatim."""

    RETRYABLE_STATUS = (408, 409, 429, 500, 502, 503, 504)

    def __init__(self, backoff_base: float = 0.5, sleep=time.sleep):
        self._sleep = sleep
        self._backoff_base = backoff_base

    def complete(self, request: GenerationRequest, cfg: EndpointConfig) -> list[str]:
        import os

        import requests

        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        body = self._encode_body(request, cfg)
        last_error: Optional[str] = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if resp.status_code == 200:
                    payload = resp.json()
                    choices = payload.get("choices", [])
                    return [c.get("message", {}).get("content", "") for c in choices]
                last_error = f"HTTP {resp.status_code}: {resp.text}"
                if resp.status_code not in self.RETRYABLE_STATUS:
                    break
            if attempt < cfg.max_retries:
                self._sleep(self._backoff_base * (2 ** attempt))
        raise EndpointUnavailableError(last_error or "endpoint unreachable")

    @staticmethod
    def _encode_body(request: GenerationRequest, cfg: EndpointConfig) -> dict:
        messages = []
        for msg in request.messages:
            content = []
            for part in msg.parts:
                if isinstance(part, TextPart):
                    content.append({"type": "text", "text": part.text})
                else:
                    data = base64.b64encode(Path(part.path).read_bytes()).decode("ascii")
                    content.append({
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{data}"},
                    })
            messages.append({"role": msg.role, "content": content})
        if request.fixed_thought is not None:
            messages.append({"role": "assistant", "content": request.fixed_thought,
                             "partial": True})
        sampling = cfg.sampling
        body = {
            "model": cfg.model_name,
            "messages": messages,
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
            "max_tokens": sampling.max_tokens,
            "n": sampling.n,
        }
        if sampling.top_k > 0:
            body["top_k"] = sampling.top_k
        if sampling.repetition_penalty != 1.0:
            body["repetition_penalty"] = sampling.repetition_penalty
        if sampling.presence_penalty != 0.0:
            body["presence_penalty"] = sampling.presence_penalty
        if sampling.seed is not None:
            body["seed"] = sampling.seed
        if not request.enable_thinking:
            body["chat_template_kwargs"] = {"enable_thinking": False}
        return body


class ModelGateway:
    """Backend plus cache plus a global admission limit.

    ``generate`` is safe for concurrent callers; at most ``max_in_flight``
    requests are in the backend at any time. Completions for cached keys
    never touch the backend.
    """

    def __init__(self, backend, cfg: EndpointConfig, dialect_id: str = "",
                 flags: Optional[dict] = None):
        self.backend = backend
        self.cfg = cfg
        self.cache = ResponseCache()
        self.cfg_hash = endpoint_config_hash(cfg, dialect_id, flags)
        self._gate = threading.Semaphore(cfg.max_in_flight)

    def generate(self, request: GenerationRequest, round_idx: int = 0,
                 seed: Optional[int] = None, n: Optional[int] = None) -> list[str]:
        cfg = self.cfg
        if seed is not None or n is not None:
            sampling = replace(cfg.sampling,
                               seed=seed if seed is not None else cfg.sampling.seed,
                               n=n if n is not None else cfg.sampling.n)
            cfg = replace(cfg, sampling=sampling)

        keys = [ResponseCache.key(request.tag, self.cfg_hash, round_idx, i)
                for i in range(cfg.sampling.n)]
        cached = [self.cache.get(k) for k in keys]
        if all(c is not None for c in cached):
            return list(cached)

        with self._gate:
            outputs = self.backend.complete(request, cfg)
        for key, out in zip(keys, outputs):
            self.cache.put(key, out)
        return outputs

    def preload(self, step_key: str, payload: str, round_idx: int = 0, sample: int = 0) -> None:
        """Seed the cache from persisted records so resumes are pure hits."""
        self.cache.put(ResponseCache.key(step_key, self.cfg_hash, round_idx, sample), payload)
