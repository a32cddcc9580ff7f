"""Completion clients for hosted inference endpoints, plus a deterministic mock.

The HTTP client posts a JSON body shaped by the endpoint's ``flavor`` and
reads the generated text back out of the response:

    flavor    request body                      response field
    --------  --------------------------------  -------------------------------
    hf        {"inputs", "parameters": {...}}   [0]["generated_text"]
    openai    {"model", "messages", ...}        ["choices"][0]["message"]["content"]
    raw       {"prompt", "temperature", ...}    ["text"]

Auth tokens are read from the environment variable named in the endpoint
config, sent only in the Authorization header, and scrubbed from every error
message and log line.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

DEFAULT_MOCK_RULES_FILE = Path(__file__).parent / "data" / "mock_rules.txt"

RETRYABLE_STATUS = {429, 500, 502, 503, 504}
AUTH_STATUS = {401, 403}


class EndpointError(Exception):
    """Base class for completion-endpoint failures."""


class PromptTooLongError(EndpointError):
    """Prompt exceeds the endpoint's size bound; no request was sent."""


class AuthenticationError(EndpointError):
    """Missing or rejected credentials; never retried."""


class RateLimitedError(EndpointError):
    """Endpoint kept rate-limiting through the final attempt."""


class EndpointTimeoutError(EndpointError):
    """Endpoint kept timing out through the final attempt."""


class TransientEndpointError(EndpointError):
    """Server or connection errors persisted through the final attempt."""


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff policy for transient endpoint failures."""

    max_attempts: int = 3
    base_backoff: float = 1.0
    backoff_multiplier: float = 2.0
    max_backoff: float = 30.0
    retry_on: frozenset[str] = frozenset(
        {"rate_limit", "server_error", "timeout", "connection"}
    )

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_multiplier < 1.0:
            raise ValueError("backoff_multiplier must be >= 1")

    def delay(self, completed_attempts: int) -> float:
        """Backoff before the next attempt; non-decreasing, capped."""
        raw = self.base_backoff * self.backoff_multiplier ** (completed_attempts - 1)
        return min(raw, self.max_backoff)


@dataclass(frozen=True)
class EndpointConfig:
    """One HTTP completion endpoint with its decoding and retry settings."""

    name: str
    base_url: str
    flavor: str = "hf"
    auth_token_env: str | None = None
    timeout: float = 30.0
    max_prompt_chars: int = 8000
    temperature: float = 0.0
    max_output_tokens: int = 64
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_prompt_chars <= 0:
            raise ValueError("max_prompt_chars must be positive")
        if self.flavor not in ("hf", "openai", "raw"):
            raise ValueError(f"unknown endpoint flavor {self.flavor!r}")


@dataclass(frozen=True)
class CompletionResult:
    """One successful completion with its bookkeeping."""

    text: str
    latency: float
    attempts: int
    endpoint_name: str


def _build_body(config: EndpointConfig, prompt: str) -> dict:
    if config.flavor == "hf":
        return {
            "inputs": prompt,
            "parameters": {
                "temperature": config.temperature,
                "max_new_tokens": config.max_output_tokens,
                "return_full_text": False,
            },
        }
    if config.flavor == "openai":
        return {
            "model": config.name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
    return {
        "prompt": prompt,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }


def _extract_text(config: EndpointConfig, payload) -> str:
    try:
        if config.flavor == "hf":
            return str(payload[0]["generated_text"])
        if config.flavor == "openai":
            return str(payload["choices"][0]["message"]["content"])
        return str(payload["text"])
    except (KeyError, IndexError, TypeError) as exc:
        raise EndpointError(
            f"endpoint {config.name!r} returned an unexpected payload shape: {exc}"
        ) from None


def _redact(message: str, token: str | None) -> str:
    if token:
        message = message.replace(token, "[redacted]")
    return message


def complete(
    config: EndpointConfig,
    prompt: str,
    session: requests.Session | None = None,
    sleep=time.sleep,
) -> CompletionResult:
    """POST the prompt to the endpoint, retrying transient failures with backoff."""
    if len(prompt) > config.max_prompt_chars:
        raise PromptTooLongError(
            f"prompt is {len(prompt)} characters, endpoint {config.name!r} "
            f"accepts at most {config.max_prompt_chars}"
        )
    token = None
    if config.auth_token_env:
        token = os.environ.get(config.auth_token_env)
        if not token:
            raise AuthenticationError(
                f"environment variable {config.auth_token_env!r} is not set"
            )
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    body = _build_body(config, prompt)
    post = (session or requests).post

    policy = config.retry
    started = time.monotonic()
    failure_class = None
    failure_detail = ""
    for attempt in range(1, policy.max_attempts + 1):
        try:
            response = post(
                config.base_url, json=body, headers=headers, timeout=config.timeout
            )
        except requests.Timeout:
            failure_class, failure_detail = "timeout", f"timed out after {config.timeout}s"
        except requests.ConnectionError as exc:
            failure_class = "connection"
            failure_detail = _redact(f"connection failed: {exc}", token)
        else:
            status = response.status_code
            if status == 200:
                text = _extract_text(config, response.json())
                return CompletionResult(
                    text=text,
                    latency=time.monotonic() - started,
                    attempts=attempt,
                    endpoint_name=config.name,
                )
            if status in AUTH_STATUS:
                raise AuthenticationError(
                    f"endpoint {config.name!r} rejected credentials (HTTP {status})"
                )
            if status == 429:
                failure_class, failure_detail = "rate_limit", f"HTTP {status}"
            elif status in RETRYABLE_STATUS:
                failure_class, failure_detail = "server_error", f"HTTP {status}"
            else:
                raise EndpointError(
                    _redact(
                        f"endpoint {config.name!r} returned HTTP {status}: "
                        f"{response.text[:200]}",
                        token,
                    )
                )
        if attempt < policy.max_attempts and failure_class in policy.retry_on:
            delay = policy.delay(attempt)
            logger.warning(
                "endpoint %s attempt %d/%d failed (%s: %s); backing off %.2fs",
                config.name, attempt, policy.max_attempts,
                failure_class, failure_detail, delay,
            )
            sleep(delay)
            continue
        break

    message = (
        f"endpoint {config.name!r} failed after {policy.max_attempts} attempt(s): "
        f"{failure_class}: {failure_detail}"
    )
    if failure_class == "rate_limit":
        raise RateLimitedError(message)
    if failure_class == "timeout":
        raise EndpointTimeoutError(message)
    raise TransientEndpointError(message)


@dataclass(frozen=True)
class MockRules:
    """Ordered (substring pattern -> canned response) table; first match wins."""

    rules: tuple[tuple[str, str], ...]
    default_response: str = "Neutral"

    def __post_init__(self):
        object.__setattr__(
            self,
            "rules",
            tuple((pattern.lower(), response) for pattern, response in self.rules),
        )


def mock_complete(rules: MockRules, prompt: str) -> CompletionResult:
    """Deterministic canned response; pure in (rules, prompt)."""
    lowered = prompt.lower()
    text = rules.default_response
    for pattern, response in rules.rules:
        if pattern in lowered:
            text = response
            break
    return CompletionResult(text=text, latency=0.0, attempts=1, endpoint_name="mock")


def load_mock_rules(path: str | Path | None = None) -> MockRules:
    """Read a mock-rule file: ``pattern => response`` lines, ``*`` sets the default."""
    path = Path(path) if path is not None else DEFAULT_MOCK_RULES_FILE
    rules = []
    default = "Neutral"
    for line_num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=>" not in stripped:
            raise ValueError(f"{path}, line {line_num}: expected 'pattern => response'")
        pattern, _, response = stripped.partition("=>")
        pattern, response = pattern.strip(), response.strip()
        if pattern == "*":
            default = response
        else:
            rules.append((pattern, response))
    return MockRules(tuple(rules), default)


class RateLimiter:
    """Minimum-interval request pacing shared across worker threads."""

    def __init__(self, per_minute: float | None, clock=time.monotonic, sleep=time.sleep):
        import threading

        self._interval = 60.0 / per_minute if per_minute else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_start = 0.0

    def acquire(self) -> None:
        if self._interval <= 0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_start - now
            self._next_start = max(self._next_start, now) + self._interval
        if wait > 0:
            self._sleep(wait)
