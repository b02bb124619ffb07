"""Provider-agnostic chat-completion transport with record/replay.

A ProviderProfile is data, not code: endpoint, model, sampling, auth env-var
name. Requests are digested (sha256 over the line-ending-normalized prompt
plus canonical sampling params) so a cassette recorded once replays
byte-for-byte anywhere, with zero network use. Replay consumes entries in
request order within each (agent, round) key stream; any digest mismatch is
a hard error rather than a silent drift.

Auth tokens are read from the environment at call time and never written to
cassettes, logs, or error messages.

The built-in ``stub://`` endpoint is a deterministic offline responder that
reads the rendered prompt and answers with template-conformant JSON, so CLI
and record/replay paths are exercisable without any provider.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional

from .persist import canonical_json, read_jsonl


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """Network-level failure after retries were exhausted."""


class TransientTransportError(TransportError):
    """Retryable failure (connection trouble, 429, 5xx)."""


class CassetteMismatch(GatewayError):
    """Replay saw a request the recording never made."""


@dataclass(frozen=True)
class ProviderProfile:
    name: str
    endpoint: str
    model: str
    auth_env: str = ""
    sampling: Mapping = field(default_factory=dict)
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def canonicalize_prompt(text: str) -> str:
    # Line endings normalize; inner whitespace is part of the contract.
    return text.replace("\r\n", "\n").replace("\r", "\n")


def request_digest(profile: ProviderProfile, prompt: str) -> str:
    params = canonical_json({"model": profile.model,
                             "sampling": dict(profile.sampling)})
    body = canonicalize_prompt(prompt).encode("utf-8") + b"\x00" + params.encode("utf-8")
    return hashlib.sha256(body).hexdigest()


class CassetteMode(str, Enum):
    RECORD = "RECORD"
    REPLAY = "REPLAY"
    PASSTHROUGH = "PASSTHROUGH"


@dataclass(frozen=True)
class CassetteEntry:
    key: str
    digest: str
    response: str
    latency: float
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float
    replayed: bool = False


class Cassette:
    """Ordered exchange store; appends and reads are serialized internally."""

    def __init__(self, mode: CassetteMode, entries=(), label: str = ""):
        self.mode = CassetteMode(mode)
        self.entries: list[CassetteEntry] = list(entries)
        self.label = label
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path, mode: CassetteMode = CassetteMode.REPLAY) -> "Cassette":
        entries = [CassetteEntry(**row) for row in read_jsonl(path)]
        return cls(mode, entries, label=Path(path).stem)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.entries:
                handle.write(canonical_json(vars(entry)))

    def record(self, entry: CassetteEntry) -> None:
        with self._lock:
            self.entries.append(entry)

    def replay(self, key: str, digest: str) -> CassetteEntry:
        with self._lock:
            stream = [e for e in self.entries if e.key == key]
            cursor = self._cursors.get(key, 0)
            if cursor >= len(stream):
                raise CassetteMismatch(
                    f"replay exhausted for key {key!r} after {cursor} exchanges")
            entry = stream[cursor]
            if entry.digest != digest:
                raise CassetteMismatch(
                    f"digest mismatch for key {key!r} exchange {cursor}: "
                    f"recorded {entry.digest[:12]}..., requested {digest[:12]}...")
            self._cursors[key] = cursor + 1
            return entry


def _estimate_tokens(text: str) -> int:
    return max(1, (len(text) + 3) // 4)


# --- offline stub provider --------------------------------------------------

_BAND_RE = re.compile(r"integer values between (\d+) and (\d+)\.")
_PREV_RE = re.compile(r"Market price \(Previous Round\): (\d+)")
_CASH_RE = re.compile(r"- Current cash: ([0-9.]+)")
_SHARES_RE = re.compile(r"- # of shares owned: (\d+)")
_FORECAST_RE = re.compile(
    r'"round": (\d+),\s*"min_value": 0,\s*"max_value": (\d+)')


def stub_response(profile: ProviderProfile, prompt: str) -> str:
    """Deterministic template-conformant answer derived from the prompt."""
    if "PRACTICE REFLECTION stage" in prompt:
        return json.dumps({"new_content": {"practice_reflection":
                           "Prices stayed near the buyback value; I will "
                           "trade only at favorable prices."}})

    persona = profile.endpoint[len("stub://"):] or "value"
    lo, hi = map(int, _BAND_RE.search(prompt).groups())
    prev = int(_PREV_RE.findall(prompt)[-1])
    cash = Decimal(_CASH_RE.findall(prompt)[-1])
    shares = int(_SHARES_RE.findall(prompt)[-1])
    targets = [(int(r), int(b)) for r, b in _FORECAST_RE.findall(prompt)]

    orders = []
    if persona == "value":
        if cash >= lo:
            orders.append({"order_type": "BUY", "quantity": 1,
                           "limit_price": lo})
        elif shares > 0:
            orders.append({"order_type": "SELL", "quantity": 1,
                           "limit_price": hi})
    elif persona == "eager" and shares > 0:
        orders.append({"order_type": "SELL", "quantity": 1, "limit_price": lo})
    # persona "hold": no orders

    return json.dumps({
        "observations_and_thoughts": f"price {prev}, band {lo}-{hi}",
        "new_content": {
            "PLANS.txt": f"trade near {prev}",
            "INSIGHTS.txt": "stub insight",
            "price_forecasts": [
                {"round": r, "min_value": 0, "max_value": b,
                 "forecasted_price": min(prev, b)}
                for r, b in targets
            ],
        },
        "submitted_orders": orders,
    })


# --- transports ---------------------------------------------------------------


def _auth_headers(profile: ProviderProfile) -> dict:
    headers = {"Content-Type": "application/json"}
    if profile.auth_env:
        token = os.environ.get(profile.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    return headers


def http_transport(profile: ProviderProfile, prompt: str) -> tuple[str, int, int]:
    payload = {"model": profile.model,
               "messages": [{"role": "user", "content": prompt}]}
    payload.update(profile.sampling)
    request = urllib.request.Request(
        profile.endpoint, data=json.dumps(payload).encode("utf-8"),
        headers=_auth_headers(profile), method="POST")
    try:
        with urllib.request.urlopen(request, timeout=profile.timeout) as response:
            data = json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code == 429 or exc.code >= 500:
            raise TransientTransportError(
                f"{profile.endpoint} returned {exc.code}") from None
        raise TransportError(f"{profile.endpoint} returned {exc.code}") from None
    except urllib.error.URLError as exc:
        raise TransientTransportError(
            f"{profile.endpoint} unreachable: {exc.reason}") from None

    if "choices" in data:  # chat-completion shape
        text = data["choices"][0]["message"]["content"]
    else:  # messages-API shape
        text = data["content"][0]["text"]
    usage = data.get("usage", {})
    return (text,
            int(usage.get("prompt_tokens", _estimate_tokens(prompt))),
            int(usage.get("completion_tokens", _estimate_tokens(text))))


def default_transport(profile: ProviderProfile, prompt: str) -> tuple[str, int, int]:
    if profile.endpoint.startswith("stub://"):
        text = stub_response(profile, prompt)
        return text, _estimate_tokens(prompt), _estimate_tokens(text)
    return http_transport(profile, prompt)


class UsageTally:
    """Per-model token/call accumulation (the reporting shape for usage tables)."""

    def __init__(self):
        self._by_model: dict[str, dict[str, int]] = {}
        self._lock = threading.Lock()

    def add(self, model: str, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            row = self._by_model.setdefault(
                model, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0})
            row["calls"] += 1
            row["prompt_tokens"] += prompt_tokens
            row["completion_tokens"] += completion_tokens

    def as_dict(self) -> dict:
        return {model: dict(row) for model, row in self._by_model.items()}


def complete(profile: ProviderProfile, prompt: str,
             cassette: Optional[Cassette] = None, *, key: str = "",
             transport: Optional[Callable] = None,
             sleeper: Callable[[float], None] = None,
             usage: Optional[UsageTally] = None) -> CompletionResult:
    """One exchange. REPLAY never touches a transport; RECORD appends."""
    import time

    digest = request_digest(profile, prompt)
    if cassette is not None and cassette.mode is CassetteMode.REPLAY:
        entry = cassette.replay(key, digest)
        if usage is not None:
            usage.add(profile.model, entry.prompt_tokens, entry.completion_tokens)
        return CompletionResult(entry.response, entry.prompt_tokens,
                                entry.completion_tokens, entry.latency,
                                replayed=True)

    transport = transport or default_transport
    sleeper = sleeper or time.sleep
    attempt = 0
    while True:
        try:
            started = time.monotonic()
            text, prompt_tokens, completion_tokens = transport(profile, prompt)
            latency = time.monotonic() - started
            break
        except TransientTransportError:
            if attempt >= profile.max_retries:
                raise
            sleeper(0.5 * 2 ** attempt)
            attempt += 1

    if profile.endpoint.startswith("stub://"):
        latency = 0.0  # keep recorded cassettes byte-stable offline

    if cassette is not None and cassette.mode is CassetteMode.RECORD:
        cassette.record(CassetteEntry(
            key=key, digest=digest, response=text, latency=latency,
            prompt_tokens=prompt_tokens, completion_tokens=completion_tokens))
    if usage is not None:
        usage.add(profile.model, prompt_tokens, completion_tokens)
    return CompletionResult(text, prompt_tokens, completion_tokens, latency)
