"""Provider adapters, retry/repair logic, rate limiting, and the audit log.

Two payload shapes ship (OpenAI-style chat completions and Gemini-style
generateContent); both speak plain HTTP POST with base64-embedded WAV
audio, so a loopback mock can stand in for either.  Requests for
distinct pairs may run concurrently behind a shared token bucket.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from ..errors import ParseError, ProviderError, RateLimited
from .parse import parse_scores, strip_rationale
from .prompts import JudgePrompt

REPAIR_INSTRUCTION = (
    "Your previous reply could not be parsed. Reply again with only one fenced "
    "```json``` block containing the keys A through I and numeric scores in [-3, 3]."
)


@dataclass
class ProviderConfig:
    style: str  # "openai" | "gemini"
    endpoint: str  # base URL
    model: str = "default"
    api_key_env: str = "RIE_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: tuple = (1.0, 2.0, 4.0)
    concurrency: int = 2

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "")


@dataclass
class JudgeResponse:
    scores: np.ndarray
    rationale: str
    raw: str
    provider: str
    latency_ms: int


def _encode_wav(path) -> str:
    return base64.b64encode(Path(path).read_bytes()).decode("ascii")


def _build_payload(cfg: ProviderConfig, texts: list[str], audio_refs) -> tuple[str, dict]:
    clips = [_encode_wav(p) for p in audio_refs if p]
    if cfg.style == "openai":
        content = [{"type": "text", "text": t} for t in texts]
        content += [
            {"type": "input_audio", "input_audio": {"data": c, "format": "wav"}}
            for c in clips
        ]
        return (
            f"{cfg.endpoint.rstrip('/')}/v1/chat/completions",
            {"model": cfg.model, "messages": [{"role": "user", "content": content}]},
        )
    if cfg.style == "gemini":
        parts = [{"text": t} for t in texts]
        parts += [{"inline_data": {"mime_type": "audio/wav", "data": c}} for c in clips]
        return (
            f"{cfg.endpoint.rstrip('/')}/v1beta/models/{cfg.model}:generateContent",
            {"contents": [{"role": "user", "parts": parts}]},
        )
    raise ProviderError(f"unknown provider style {cfg.style!r}")


def _extract_text(cfg: ProviderConfig, body: dict) -> str:
    try:
        if cfg.style == "openai":
            return body["choices"][0]["message"]["content"]
        return "".join(
            part.get("text", "")
            for part in body["candidates"][0]["content"]["parts"]
        )
    except (KeyError, IndexError, TypeError) as e:
        raise ProviderError(f"malformed provider response: {e}") from e


def _http_transport(url: str, headers: dict, payload: dict, timeout: float):
    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return resp.status_code, resp.text


def _request(cfg: ProviderConfig, texts, audio_refs, transport, sleep) -> str:
    """One logical request with transport retries; returns the model text."""
    url, payload = _build_payload(cfg, texts, audio_refs)
    headers = {"Content-Type": "application/json"}
    key = cfg.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    last_error: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            sleep(cfg.backoff_s[min(attempt - 1, len(cfg.backoff_s) - 1)])
        try:
            status, text = transport(url, headers, payload, cfg.timeout_s)
        except Exception as e:  # transport-level failure: retry
            last_error = e
            continue
        if status == 429:
            last_error = RateLimited(f"{url}: 429")
            continue
        if status >= 500:
            last_error = ProviderError(f"{url}: status {status}")
            continue
        if status != 200:
            raise ProviderError(f"{url}: status {status}: {text[:200]}")
        return _extract_text(cfg, json.loads(text))
    if isinstance(last_error, RateLimited):
        raise last_error
    raise ProviderError(f"{url}: retries exhausted: {last_error}")


def judge(
    prompt: JudgePrompt,
    cfg: ProviderConfig,
    transport=_http_transport,
    sleep=time.sleep,
) -> JudgeResponse:
    """Send one judging request; one repair re-prompt on parse failure."""
    start = time.monotonic()
    raw = _request(cfg, [prompt.rendered_text], prompt.audio_refs, transport, sleep)
    try:
        scores = parse_scores(raw)
    except ParseError:
        raw = _request(
            cfg,
            [prompt.rendered_text, REPAIR_INSTRUCTION],
            prompt.audio_refs,
            transport,
            sleep,
        )
        scores = parse_scores(raw)  # ParseError propagates after the one repair
    latency = int((time.monotonic() - start) * 1000)
    return JudgeResponse(scores, strip_rationale(raw), raw, cfg.style, latency)


class TokenBucket:
    """Simple shared rate limiter: `rate` tokens/s up to `capacity`."""

    def __init__(self, rate: float, capacity: int, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = float(capacity)
        self.tokens = float(capacity)
        self.clock = clock
        self.sleep = sleep
        self.updated = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                needed = (1.0 - self.tokens) / self.rate
            self.sleep(needed)


class AuditLog:
    """Append-only JSONL log with monotonic sequence numbers."""

    def __init__(self, path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self.seq = 0

    def append(self, pair_id: str, provider: str, prompt_text: str, response: JudgeResponse):
        import hashlib

        record = {
            "seq": None,
            "pair_id": pair_id,
            "provider": provider,
            "prompt_hash": hashlib.sha256(prompt_text.encode()).hexdigest()[:16],
            "raw": response.raw,
            "scores": [float(s) for s in response.scores],
            "latency_ms": response.latency_ms,
            "timestamp": time.time(),
        }
        with self.lock:
            record["seq"] = self.seq
            self.seq += 1
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def judge_pairs(
    prompts: dict,
    cfg: ProviderConfig,
    transport=_http_transport,
    sleep=time.sleep,
    bucket: TokenBucket | None = None,
    audit: AuditLog | None = None,
) -> dict:
    """Judge many pairs concurrently (bounded); returns pair_id -> response."""

    def run(item):
        pair_id, prompt = item
        if bucket is not None:
            bucket.acquire()
        response = judge(prompt, cfg, transport, sleep)
        if audit is not None:
            audit.append(pair_id, cfg.style, prompt.rendered_text, response)
        return pair_id, response

    out = {}
    with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as pool:
        for pair_id, response in pool.map(run, sorted(prompts.items())):
            out[pair_id] = response
    return out
