"""Provider-agnostic chat-completion gateway.

Two providers: a live OpenAI-compatible HTTP client, and a replay provider
that serves scripted transcript turns keyed by agent role.  The replay
provider never touches the network; per-role cursors make it deterministic
regardless of how concurrent sub-agents interleave.

A session wraps one provider, attributes every call into a UsageLedger,
and rejects calls that would blow the session token ceiling.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Mapping, Optional

from .errors import (
    BudgetExceeded,
    ConfigError,
    ProviderUnreachable,
    TranscriptExhausted,
    UnknownModel,
)
from .model import CallUsage, UsageLedger

ROLE_RE = re.compile(r"^(planner|debug|subagent:(geo|mat|light|cam|bg))$")

DEFAULT_TOKEN_CEILING = 200_000


@dataclass(frozen=True)
class CompletionRequest:
    role_id: str
    system_prompt: str
    user_payload: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not ROLE_RE.match(self.role_id):
            raise ValueError(f"invalid role_id {self.role_id!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    wall_micros: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class PriceEntry:
    prompt_per_1k: float
    completion_per_1k: float


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "replay"  # "live" | "replay"
    endpoint: str = ""
    credentials_env: str = "EZBLENDER_API_KEY"
    transcript_path: Optional[str] = None
    model_id: str = "gpt-4o"
    price_table: Mapping[str, PriceEntry] = field(default_factory=dict)
    artificial_delay_ms: float = 0.0  # replay only: sleep + reported wall time
    token_ceiling: int = DEFAULT_TOKEN_CEILING

    def __post_init__(self) -> None:
        if self.kind not in ("live", "replay"):
            raise ValueError(f"provider kind must be 'live' or 'replay', got {self.kind!r}")
        if self.kind == "live" and not self.endpoint:
            raise ValueError("live provider requires an endpoint URL")


class Provider:
    """Interface: turn a request into a response (no ledger concerns)."""

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def peek_tokens(self, request: CompletionRequest) -> Optional[tuple[int, int]]:
        """Scripted providers can pre-announce token counts for budget checks."""
        return None


@dataclass(frozen=True)
class TranscriptTurn:
    role_id: str
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


def load_transcript(path: "str | Path") -> list[TranscriptTurn]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load transcript {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ConfigError(f"transcript {path} must be a JSON array of turns")
    turns = []
    for i, item in enumerate(raw):
        try:
            turns.append(TranscriptTurn(
                role_id=item["role_id"],
                text=item["text"],
                prompt_tokens=int(item.get("prompt_tokens", 0)),
                completion_tokens=int(item.get("completion_tokens", 0)),
            ))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"transcript {path} turn {i} is malformed: {exc}") from exc
    return turns


class ReplayProvider(Provider):
    """Deterministic stand-in: serves transcript turns in order per role.

    Performs no network I/O.  When ``artificial_delay_ms`` is set the call
    sleeps for real (so wall-clock parallelism is observable) and reports
    exactly that delay as the call's wall time, keeping ledgers identical
    across runs and scheduling orders.
    """

    def __init__(self, turns: list[TranscriptTurn], artificial_delay_ms: float = 0.0):
        self._lock = threading.Lock()
        self._queues: dict[str, list[TranscriptTurn]] = {}
        for turn in turns:
            self._queues.setdefault(turn.role_id, []).append(turn)
        self._cursors: dict[str, int] = {}
        self.artificial_delay_ms = artificial_delay_ms
        self.requests: list[CompletionRequest] = []  # recorded for assertions

    @classmethod
    def from_path(cls, path: "str | Path", artificial_delay_ms: float = 0.0) -> "ReplayProvider":
        return cls(load_transcript(path), artificial_delay_ms)

    def _peek_turn(self, role_id: str) -> TranscriptTurn:
        queue = self._queues.get(role_id, [])
        cursor = self._cursors.get(role_id, 0)
        if cursor >= len(queue):
            raise TranscriptExhausted(
                f"replay transcript has no turn {cursor + 1} for role {role_id!r}")
        return queue[cursor]

    def peek_tokens(self, request: CompletionRequest) -> Optional[tuple[int, int]]:
        with self._lock:
            turn = self._peek_turn(request.role_id)
        return (turn.prompt_tokens, turn.completion_tokens)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            turn = self._peek_turn(request.role_id)
            self._cursors[request.role_id] = self._cursors.get(request.role_id, 0) + 1
            self.requests.append(request)
        if self.artificial_delay_ms > 0:
            time.sleep(self.artificial_delay_ms / 1000.0)
        return CompletionResponse(
            text=turn.text,
            prompt_tokens=turn.prompt_tokens,
            completion_tokens=turn.completion_tokens,
            wall_micros=int(self.artificial_delay_ms * 1000),
        )


class LiveProvider(Provider):
    """OpenAI-compatible chat-completions client (POST, bearer auth)."""

    def __init__(self, config: ProviderConfig, timeout_s: float = 120.0):
        self.config = config
        self.timeout_s = timeout_s

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        import requests  # imported here so replay sessions never load it

        api_key = os.environ.get(self.config.credentials_env, "")
        payload = {
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_payload},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        started = time.monotonic_ns()
        try:
            resp = requests.post(
                self.config.endpoint.rstrip("/") + "/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}",
                         "Content-Type": "application/json"},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            data = resp.json()
        except Exception as exc:
            raise ProviderUnreachable(f"chat completion failed: {exc}") from exc
        wall_micros = (time.monotonic_ns() - started) // 1000
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnreachable(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage", {})
        return CompletionResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            wall_micros=int(wall_micros),
        )


def build_provider(config: ProviderConfig) -> Provider:
    if config.kind == "replay":
        if not config.transcript_path:
            raise ConfigError("replay provider requires a transcript path")
        return ReplayProvider.from_path(config.transcript_path, config.artificial_delay_ms)
    return LiveProvider(config)


class GatewaySession:
    """One provider plus one usage ledger; thread-safe, atomic per call."""

    def __init__(self, provider: Provider, config: ProviderConfig,
                 observer: Optional[Callable[[CallUsage], None]] = None):
        self.provider = provider
        self.config = config
        self._lock = threading.Lock()
        self._ledger = UsageLedger()
        self._observer = observer

    @property
    def ledger(self) -> UsageLedger:
        with self._lock:
            return self._ledger

    def _would_exceed(self, prompt_tokens: int, completion_tokens: int) -> bool:
        return (self._ledger.total_tokens + prompt_tokens + completion_tokens
                > self.config.token_ceiling)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        peeked = self.provider.peek_tokens(request)
        if peeked is not None:
            with self._lock:
                if self._would_exceed(*peeked):
                    raise BudgetExceeded(
                        f"call for {request.role_id} would exceed the session ceiling of "
                        f"{self.config.token_ceiling} tokens")
        response = self.provider.complete(request)
        call = CallUsage(role_id=request.role_id,
                         prompt_tokens=response.prompt_tokens,
                         completion_tokens=response.completion_tokens,
                         wall_micros=response.wall_micros)
        with self._lock:
            if self._would_exceed(response.prompt_tokens, response.completion_tokens):
                raise BudgetExceeded(
                    f"call for {request.role_id} exceeded the session ceiling of "
                    f"{self.config.token_ceiling} tokens")
            self._ledger = self._ledger.with_call(call)
        if self._observer is not None:
            self._observer(call)
        return response


def estimate_cost(ledger: UsageLedger, price_table: Mapping[str, PriceEntry],
                  model_id: str) -> float:
    """Dollar cost of a session: per-1k token prices, rounded half-up to 4 dp."""
    if model_id not in price_table:
        raise UnknownModel(f"no price entry for model {model_id!r}")
    entry = price_table[model_id]
    cost = (Decimal(ledger.prompt_tokens) / 1000 * Decimal(str(entry.prompt_per_1k))
            + Decimal(ledger.completion_tokens) / 1000 * Decimal(str(entry.completion_per_1k)))
    return float(cost.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def format_cost(ledger: UsageLedger, price_table: Mapping[str, PriceEntry],
                model_id: str) -> str:
    return f"{estimate_cost(ledger, price_table, model_id):.4f}"
