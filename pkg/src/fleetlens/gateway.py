"""LLM backends, prompt cache, usage/cost accounting, and the chunked baseline.

Two completion strategies are implemented side by side: the planned single-call
path over a grounded prompt, and a raw-data baseline that shortens JSON keys,
splits the records into roughly 3,000-token chunks, samples at most five of
them at evenly spaced indices, runs an extraction call per chunk, and finishes
with one synthesis call.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Optional, Protocol, Sequence

logger = logging.getLogger(__name__)

# Pricing used for cost accounting (USD per token).
INPUT_COST_PER_MTOK = 0.05
OUTPUT_COST_PER_MTOK = 0.08

STRATEGY_PLANNED = "flash_fusion"
STRATEGY_RAW_CHUNKS = "llm_only"

DEFAULT_CHUNK_TOKENS = 3000
MAX_SAMPLED_CHUNKS = 5
CACHE_CAPACITY = 1024


class BackendError(RuntimeError):
    """A backend call failed after retries; may carry partial usage."""

    def __init__(self, message: str, usage: "UsageReport | None" = None):
        super().__init__(message)
        self.usage = usage


class RateLimitedError(BackendError):
    def __init__(self, message: str, retry_after_s: float | None = None):
        super().__init__(message)
        self.retry_after_s = retry_after_s


def reference_tokenize(text: str) -> int:
    """Planning-time token estimate: ceil(len(text) / 4)."""
    return math.ceil(len(text) / 4)


def compute_cost(input_tokens: int, output_tokens: int) -> float:
    return (input_tokens * INPUT_COST_PER_MTOK / 1e6
            + output_tokens * OUTPUT_COST_PER_MTOK / 1e6)


@dataclass(frozen=True)
class Completion:
    text: str
    input_tokens: int
    output_tokens: int
    wall_latency_ms: float
    api_calls: int


@dataclass(frozen=True)
class UsageReport:
    """Per-query accounting across however many calls a strategy needed."""

    strategy: str
    input_tokens: int
    output_tokens: int
    api_calls: int
    wall_latency_ms: float
    cost_usd: float
    temperature: float
    max_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    @classmethod
    def from_completions(cls, strategy: str, completions: Sequence[Completion],
                         temperature: float, max_tokens: int) -> "UsageReport":
        input_tokens = sum(c.input_tokens for c in completions)
        output_tokens = sum(c.output_tokens for c in completions)
        return cls(
            strategy=strategy,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            api_calls=sum(c.api_calls for c in completions),
            wall_latency_ms=sum(c.wall_latency_ms for c in completions),
            cost_usd=compute_cost(input_tokens, output_tokens),
            temperature=temperature,
            max_tokens=max_tokens,
        )

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
            "api_calls": self.api_calls,
            "wall_latency_ms": self.wall_latency_ms,
            "cost_usd": self.cost_usd,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class GenerationResult:
    text: str
    input_tokens: int
    output_tokens: int
    simulated_delay_ms: float = 0.0


class Backend(Protocol):
    def generate(self, prompt: str, temperature: float,
                 max_tokens: int) -> GenerationResult: ...


_DATA_BLOCK = re.compile(r"BEGIN DATA\n(.*?)\nEND DATA", re.DOTALL)
_PROMPT_NUMBERS = re.compile(r"\d+(?:\.\d+)?")

_FILLER_SENTENCES = (
    "The sampled slices suggest recurring stop-and-go phases.",
    "Several records cluster around similar coordinate ranges.",
    "Acceleration values stay close to gravity with sporadic spikes.",
    "Coverage of the route appears uneven across the sampled records.",
    "Timestamps advance steadily with occasional longer pauses.",
)

_CORRUPTION = " Precisely 987654321 anomalies were recorded near Maple Street."


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")


class MockBackend:
    """Deterministic offline backend.

    Prompts carrying a ``BEGIN DATA``/``END DATA`` block are answered by
    restating the block, which grounds every fact in the prompt; other prompts
    get a templated digest of the numbers they contain. The ``corrupt`` variant
    appends one fabricated figure and one fabricated place so validation
    fixtures have a guaranteed-failing twin. Token counts use the reference
    tokenizer. Optionally simulates provider rate limits (requests and tokens
    per minute) as reported virtual delay, without sleeping.
    """

    def __init__(self, seed: int = 0, corrupt: bool = False,
                 simulate_rate_limit: bool = False,
                 requests_per_min: int = 30, tokens_per_min: int = 6000):
        self.seed = seed
        self.corrupt = corrupt
        self.simulate_rate_limit = simulate_rate_limit
        self.requests_per_min = requests_per_min
        self.tokens_per_min = tokens_per_min

    def _compose(self, prompt: str) -> str:
        block = _DATA_BLOCK.search(prompt)
        if block:
            text = (
                "Here is what the telemetry shows.\n"
                + block.group(1)
                + "\nAll figures above come directly from the aggregated records."
            )
        else:
            numbers = _PROMPT_NUMBERS.findall(prompt)[:12]
            h = _stable_hash(f"{self.seed}|{prompt}")
            chosen = [
                _FILLER_SENTENCES[(h + i) % len(_FILLER_SENTENCES)]
                for i in range(2 + h % 3)
            ]
            mention = ("Values mentioned in the records include "
                       + ", ".join(numbers) + "." if numbers else
                       "The records contain no numeric values.")
            text = mention + " " + " ".join(chosen)
        if self.corrupt:
            text += _CORRUPTION
        return text

    def generate(self, prompt: str, temperature: float, max_tokens: int) -> GenerationResult:
        text = self._compose(prompt)
        limit = max_tokens * 4
        if len(text) > limit:
            text = text[:limit]
        delay = 0.0
        if self.simulate_rate_limit:
            tokens = reference_tokenize(prompt) + reference_tokenize(text)
            delay = (60.0 / self.requests_per_min + tokens * 60.0 / self.tokens_per_min) * 1000
        return GenerationResult(
            text=text,
            input_tokens=reference_tokenize(prompt),
            output_tokens=reference_tokenize(text),
            simulated_delay_ms=delay,
        )


class HttpChatBackend:
    """Chat-completions JSON client; token usage comes from response metadata."""

    def __init__(self, endpoint: str, model: str,
                 api_key_env: str = "FLEETLENS_API_KEY", timeout_s: float = 30.0):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.timeout_s = timeout_s
        self._api_key = os.environ.get(api_key_env, "")
        self._client = httpx.Client(timeout=timeout_s)

    def generate(self, prompt: str, temperature: float, max_tokens: int) -> GenerationResult:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        try:
            response = self._client.post(self.endpoint, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise BackendError(f"backend timeout after {self.timeout_s}s: {exc}") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"backend transport failure: {exc}") from exc
        if response.status_code == 429:
            retry_after = response.headers.get("Retry-After")
            raise RateLimitedError(
                "backend rate limited",
                retry_after_s=float(retry_after) if retry_after else None,
            )
        if response.status_code >= 400:
            raise BackendError(f"backend HTTP {response.status_code}: {response.text[:200]}")
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            input_tokens = int(usage.get("prompt_tokens", reference_tokenize(prompt)))
            output_tokens = int(usage.get("completion_tokens", reference_tokenize(text)))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        return GenerationResult(text, input_tokens, output_tokens)


def cache_key(prompt: str, temperature: float, max_tokens: int) -> str:
    canonical = f"{temperature!r}|{max_tokens}|{prompt}"
    return hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).hexdigest()


class GatewayClient:
    """Backend wrapper adding an LRU prompt cache, retries, and timing."""

    def __init__(self, backend: Backend, cache_capacity: int = CACHE_CAPACITY,
                 max_retries: int = 2, base_backoff_s: float = 0.1,
                 sleeper: Callable[[float], None] = time.sleep):
        self.backend = backend
        self.cache_capacity = cache_capacity
        self.max_retries = max_retries
        self.base_backoff_s = base_backoff_s
        self._sleep = sleeper
        self._cache: OrderedDict[str, Completion] = OrderedDict()

    def complete(self, prompt: str, temperature: float, max_tokens: int,
                 use_cache: bool = True) -> Completion:
        """Complete a prompt, consulting the cache first.

        A cache hit returns the stored completion with ``api_calls == 0``; a
        miss calls the backend with up to ``max_retries`` retries (exponential
        backoff, honoring rate-limit retry-after) and stores the result.
        """
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if max_tokens <= 0:
            raise ValueError(f"max_tokens must be > 0, got {max_tokens}")

        key = cache_key(prompt, temperature, max_tokens)
        if use_cache and key in self._cache:
            self._cache.move_to_end(key)
            return replace(self._cache[key], api_calls=0, wall_latency_ms=0.0)

        attempts = 0
        while True:
            attempts += 1
            started = time.perf_counter()
            try:
                result = self.backend.generate(prompt, temperature, max_tokens)
                break
            except RateLimitedError as exc:
                if attempts > self.max_retries:
                    raise
                wait = exc.retry_after_s
                if wait is None:
                    wait = self.base_backoff_s * 2 ** (attempts - 1)
                logger.info("rate limited; retrying in %.2fs", wait)
                self._sleep(wait)
            except BackendError:
                if attempts > self.max_retries:
                    raise
                wait = self.base_backoff_s * 2 ** (attempts - 1)
                logger.info("backend error; retrying in %.2fs", wait)
                self._sleep(wait)

        elapsed_ms = (time.perf_counter() - started) * 1000 + result.simulated_delay_ms
        completion = Completion(
            text=result.text,
            input_tokens=result.input_tokens,
            output_tokens=result.output_tokens,
            wall_latency_ms=elapsed_ms,
            api_calls=attempts,
        )
        if use_cache:
            self._cache[key] = completion
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_capacity:
                self._cache.popitem(last=False)
        return completion

    def cache_size(self) -> int:
        return len(self._cache)


# --- raw-chunk baseline -------------------------------------------------------

#: Key-shortening map applied to raw records before chunking.
SHORT_KEYS = {
    "vehicle_id": "vid",
    "timestamp": "ts",
    "fix_quality": "fq",
    "window_start": "ws",
    "window_duration": "wd",
    "mag_mean": "mm",
    "mag_variance": "mv",
    "sample_count": "n",
    "anchor_lat": "lat",
    "anchor_lon": "lon",
    "gps_quality": "gq",
    "x_percentiles": "px",
    "y_percentiles": "py",
    "z_percentiles": "pz",
}


def shorten_record(obj: dict) -> dict:
    return {SHORT_KEYS.get(key, key): value for key, value in obj.items()}


def chunk_records(records: Sequence[str],
                  target_tokens: int = DEFAULT_CHUNK_TOKENS) -> list[str]:
    """Shorten keys and pack records into chunks of roughly ``target_tokens``.

    A chunk closes once it reaches the target, so every chunk except possibly
    the last is at least the target size; the chunks partition the records.
    """
    compact: list[str] = []
    for line in records:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if isinstance(obj, dict):
            obj = shorten_record(obj)
        compact.append(json.dumps(obj, separators=(",", ":")))

    chunks: list[str] = []
    current: list[str] = []
    current_tokens = 0
    for record in compact:
        current.append(record)
        current_tokens += reference_tokenize(record) + 1  # newline joins
        if current_tokens >= target_tokens:
            chunks.append("\n".join(current))
            current, current_tokens = [], 0
    if current:
        chunks.append("\n".join(current))
    return chunks


def sample_chunks(chunks: Sequence[str], cap: int = MAX_SAMPLED_CHUNKS) -> list[int]:
    """Indices of the chunks to analyze: all of them, or ``cap`` evenly spaced
    ones (index i maps to floor(i * n / cap))."""
    n = len(chunks)
    if n <= cap:
        return list(range(n))
    return [i * n // cap for i in range(cap)]


_CHUNK_PROMPT = (
    "You are reviewing raw fleet telemetry records (slice {index} of {total}).\n"
    "Question: {query}\n"
    "Extract observations relevant to the question, citing concrete values "
    "from the records.\n"
    "Records:\n{chunk}"
)

_SYNTHESIS_PROMPT = (
    "Question: {query}\n"
    "Below are intermediate findings from separate slices of a telemetry "
    "dataset. Combine them into one coherent answer to the question.\n"
    "Findings:\n{findings}"
)


def run_llm_only(query: str, records: Sequence[str], client: GatewayClient,
                 chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
                 max_chunks: int = MAX_SAMPLED_CHUNKS,
                 temperature: float = 0.7,
                 max_tokens: int = 500) -> tuple[Completion, UsageReport]:
    """Chunk-and-synthesize baseline over raw records.

    Performs ``min(chunks, max_chunks)`` extraction calls plus one synthesis
    call, all uncached (it is a benchmark, not a user-facing path). Backend
    failures propagate with the usage accumulated so far attached.
    """
    if not records:
        raise ValueError("baseline requires a non-empty dataset")
    chunks = chunk_records(records, chunk_tokens)
    picked = sample_chunks(chunks, max_chunks)

    completions: list[Completion] = []

    def fail(exc: BackendError) -> BackendError:
        exc.usage = UsageReport.from_completions(
            STRATEGY_RAW_CHUNKS, completions, temperature, max_tokens)
        return exc

    findings: list[str] = []
    for order, index in enumerate(picked, start=1):
        prompt = _CHUNK_PROMPT.format(index=order, total=len(picked),
                                      query=query, chunk=chunks[index])
        try:
            completion = client.complete(prompt, temperature, max_tokens, use_cache=False)
        except BackendError as exc:
            raise fail(exc)
        completions.append(completion)
        findings.append(f"{order}. {completion.text}")

    synthesis = _SYNTHESIS_PROMPT.format(query=query, findings="\n".join(findings))
    try:
        final = client.complete(synthesis, temperature, max_tokens, use_cache=False)
    except BackendError as exc:
        raise fail(exc)
    completions.append(final)

    report = UsageReport.from_completions(
        STRATEGY_RAW_CHUNKS, completions, temperature, max_tokens)
    return final, report


def run_flash_fusion(query: str, plan, client: GatewayClient) -> tuple[Completion, UsageReport]:
    """Planned single-call strategy: one backend call, or zero on a cache hit."""
    logger.debug("planned query %r -> category %s", query, plan.intent.category)
    completion = client.complete(plan.prompt_text, plan.temperature, plan.max_tokens)
    report = UsageReport.from_completions(
        STRATEGY_PLANNED, [completion], plan.temperature, plan.max_tokens)
    return completion, report
