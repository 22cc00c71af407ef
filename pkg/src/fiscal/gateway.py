"""Uniform chat-completion client layer.

Two backend kinds share one request/response shape: LIVE talks to any
OpenAI-compatible ``/chat/completions`` endpoint with bounded concurrency
and retry; MOCK replays an ordered rule script deterministically, which is
what every offline test and the bundled fixture pipeline run against.
"""

from __future__ import annotations

import math
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import requests

from .core import FiscalError, read_jsonl


class GatewayError(FiscalError):
    """Base class for transport and protocol errors."""


class Exhausted(GatewayError):
    """All retry attempts were spent without a successful response."""


class AuthMissing(GatewayError):
    """The configured auth environment variable is unset."""


class NoRuleMatched(GatewayError):
    """No mock script rule matched the user message."""


class MalformedResponse(GatewayError):
    """The backend replied with something that does not parse."""


class RequestRejected(GatewayError):
    """Non-retryable HTTP error (4xx other than 429)."""


class LogprobsUnsupported(GatewayError):
    """Logprobs were requested but the backend returned none."""


class AllCandidatesAbsent(GatewayError):
    """None of the candidate tokens appear in the returned logprobs."""


class BackendKind(Enum):
    LIVE = "live"
    MOCK = "mock"


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_backoff < 0:
            raise ValueError("base_backoff must be >= 0")


@dataclass(frozen=True)
class MockRule:
    """One scripted reply.  ``match`` is a plain substring of the user
    message, or a regex when prefixed with ``re:`` (searched with DOTALL)."""

    match: str
    reply: str
    logprobs: Optional[Mapping[str, float]] = None

    def __post_init__(self) -> None:
        if self.logprobs is not None:
            frozen = {str(k): float(v) for k, v in self.logprobs.items()}
            for token, lp in frozen.items():
                if lp > 0:
                    raise ValueError(f"log-probability for {token!r} is > 0: {lp}")
            object.__setattr__(self, "logprobs", frozen)

    def matches(self, user: str) -> bool:
        if self.match.startswith("re:"):
            return re.search(self.match[3:], user, re.DOTALL) is not None
        return self.match in user


@dataclass(frozen=True)
class BackendSpec:
    kind: BackendKind
    model_name: str
    base_url: str = ""
    auth_env: str = ""
    script: tuple[MockRule, ...] = ()
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if not self.model_name:
            raise ValueError("model_name must be non-empty")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.kind is BackendKind.LIVE:
            if not self.base_url:
                raise ValueError("LIVE backend requires base_url")
            if not self.auth_env:
                raise ValueError("LIVE backend requires an auth env-var name")
        else:
            if not self.script:
                raise ValueError("MOCK backend requires a non-empty script")
        object.__setattr__(self, "script", tuple(self.script))


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 256
    want_logprobs: bool = False
    top_logprobs: int = 5

    def __post_init__(self) -> None:
        if not self.system or not self.user:
            raise ValueError("system and user messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 1 <= self.top_logprobs <= 20:
            raise ValueError("top_logprobs must be in [1, 20]")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    first_token_logprobs: Optional[Mapping[str, float]]
    backend_id: str
    latency: float

    def __post_init__(self) -> None:
        if self.first_token_logprobs is not None:
            for token, lp in self.first_token_logprobs.items():
                if lp > 0:
                    raise ValueError(f"log-probability for {token!r} is > 0: {lp}")


def load_mock_script(path: str | Path) -> tuple[MockRule, ...]:
    """Read a JSON Lines script of {match, reply, logprobs?} rules."""
    rules = []
    for record in read_jsonl(path):
        rules.append(
            MockRule(
                match=record["match"],
                reply=record.get("reply", ""),
                logprobs=record.get("logprobs"),
            )
        )
    if not rules:
        raise ValueError(f"mock script {path} contains no rules")
    return tuple(rules)


class Gateway:
    """Shareable client for one backend.

    Enforces the backend's in-flight ceiling with a semaphore, so callers
    may fan out from any number of threads without extra coordination.
    """

    def __init__(
        self,
        spec: BackendSpec,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: Optional[random.Random] = None,
    ) -> None:
        self.spec = spec
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = jitter_rng or random.Random()
        self._sem = threading.BoundedSemaphore(spec.max_in_flight)

    def chat(self, req: ChatRequest) -> ChatResponse:
        with self._sem:
            start = time.monotonic()
            if self.spec.kind is BackendKind.MOCK:
                resp = self._mock_chat(req)
            else:
                resp = self._live_chat(req)
            return ChatResponse(
                text=resp.text,
                first_token_logprobs=resp.first_token_logprobs,
                backend_id=resp.backend_id,
                latency=time.monotonic() - start,
            )

    def chat_many(self, reqs: Sequence[ChatRequest]) -> list[ChatResponse]:
        """Run requests concurrently, preserving input order in the result."""
        if not reqs:
            return []
        with ThreadPoolExecutor(max_workers=self.spec.max_in_flight) as pool:
            return list(pool.map(self.chat, reqs))

    def first_token_distribution(
        self, req: ChatRequest, candidates: Sequence[str]
    ) -> dict[str, float]:
        """Probabilities for each candidate token, renormalized to sum to 1.

        Each candidate's mass aggregates its surface variants (leading
        space, capitalization) from the returned top-logprob list, because
        tokenizers differ across served models while the candidate contract
        is semantic.
        """
        if not req.want_logprobs:
            raise ValueError("first_token_distribution requires want_logprobs=True")
        if not candidates:
            raise ValueError("candidates must be non-empty")
        resp = self.chat(req)
        if resp.first_token_logprobs is None:
            raise LogprobsUnsupported(
                f"backend {self.spec.model_name} returned no logprobs"
            )
        raw = {token: math.exp(lp) for token, lp in resp.first_token_logprobs.items()}
        mass: dict[str, float] = {}
        for cand in candidates:
            c = cand.lower()
            variants = {c, c.capitalize(), " " + c, " " + c.capitalize()}
            mass[c] = sum(raw.get(v, 0.0) for v in variants)
        total = sum(mass.values())
        if total <= 0.0:
            raise AllCandidatesAbsent(
                f"none of {list(candidates)} present in logprobs "
                f"{sorted(resp.first_token_logprobs)}"
            )
        return {c: m / total for c, m in mass.items()}

    # -- backends ------------------------------------------------------

    def _mock_chat(self, req: ChatRequest) -> ChatResponse:
        for rule in self.spec.script:
            if rule.matches(req.user):
                logprobs = rule.logprobs if req.want_logprobs else None
                return ChatResponse(
                    text=rule.reply,
                    first_token_logprobs=logprobs,
                    backend_id=self.spec.model_name,
                    latency=0.0,
                )
        raise NoRuleMatched(
            f"no rule in {self.spec.model_name} script matched message "
            f"starting {req.user[:80]!r}"
        )

    def _live_chat(self, req: ChatRequest) -> ChatResponse:
        token = os.environ.get(self.spec.auth_env, "")
        if not token:
            raise AuthMissing(f"environment variable {self.spec.auth_env} is unset")
        payload: dict = {
            "model": self.spec.model_name,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = req.top_logprobs
        url = self.spec.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {token}"}

        policy = self.spec.retry
        last_failure = ""
        for attempt in range(1, policy.max_attempts + 1):
            try:
                http = self._session.post(
                    url, json=payload, headers=headers, timeout=self.spec.timeout
                )
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
            else:
                if http.status_code == 200:
                    return self._parse_live(http)
                if http.status_code == 429 or http.status_code >= 500:
                    last_failure = f"HTTP {http.status_code}"
                else:
                    raise RequestRejected(
                        f"HTTP {http.status_code} from {url}: {http.text[:200]}"
                    )
            if attempt < policy.max_attempts:
                backoff = policy.base_backoff * (2 ** (attempt - 1))
                backoff += self._rng.uniform(0, policy.base_backoff)
                self._sleep(backoff)
        raise Exhausted(
            f"{policy.max_attempts} attempts to {url} failed; last: {last_failure}"
        )

    def _parse_live(self, http: requests.Response) -> ChatResponse:
        try:
            body = http.json()
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"cannot parse completion body: {exc}") from exc
        logprobs = None
        lp_block = (choice.get("logprobs") or {}).get("content") or []
        if lp_block:
            try:
                top = lp_block[0].get("top_logprobs") or []
                logprobs = {
                    entry["token"]: min(0.0, float(entry["logprob"])) for entry in top
                }
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponse(f"cannot parse logprobs: {exc}") from exc
        return ChatResponse(
            text=text,
            first_token_logprobs=logprobs,
            backend_id=self.spec.model_name,
            latency=0.0,
        )


# Default sampling temperatures, recorded in run manifests.  Judging and
# verification want determinism; synthesis wants diversity.
JUDGE_TEMPERATURE = 0.0
SYNTHESIS_TEMPERATURE = 0.7

_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(reply: str) -> Optional[bool]:
    """First yes/no marker in a reply, or None when neither appears."""
    m = _YES_NO_RE.search(reply)
    if m is None:
        return None
    return m.group(1).lower() == "yes"
