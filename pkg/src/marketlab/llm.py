"""Language-model trader: render, complete, parse, with corrective retries.

A parse failure re-asks the provider with the failure reason appended, up to
``max_parse_retries`` times; after that act() raises and the session engine
applies its fallback policy (no orders, previous-price forecasts, incident
in the round record). Transport errors propagate the same way.
"""

from __future__ import annotations

from typing import Callable, Optional

from .agents import Agent, AgentAction, AgentObservation
from .gateway import (
    Cassette,
    GatewayError,
    ProviderProfile,
    UsageTally,
    complete,
)
from .prompts import (
    parse_reflection,
    parse_response,
    render_practice_reflection_prompt,
    render_prompt,
    render_retry_prompt,
)
from .session import SessionConfig


class ParseRetriesExhausted(GatewayError):
    pass


class LLMAgent(Agent):
    def __init__(self, agent_id: str, profile: ProviderProfile,
                 config: SessionConfig, cassette: Optional[Cassette] = None,
                 max_parse_retries: int = 2,
                 transport: Optional[Callable] = None,
                 usage: Optional[UsageTally] = None):
        super().__init__(agent_id)
        self.profile = profile
        self.config = config
        self.cassette = cassette
        self.max_parse_retries = max_parse_retries
        self.transport = transport
        self.usage = usage if usage is not None else UsageTally()

    @property
    def cassette_ids(self) -> tuple[str, ...]:
        if self.cassette is not None and self.cassette.label:
            return (self.cassette.label,)
        return ()

    def _exchange(self, prompt: str, key: str):
        return complete(self.profile, prompt, self.cassette, key=key,
                        transport=self.transport, usage=self.usage)

    def act(self, obs: AgentObservation) -> AgentAction:
        prompt = render_prompt(obs, self.config)
        key = f"{self.agent_id}:{obs.phase}:{obs.round}:act"
        failure = None
        for _ in range(self.max_parse_retries + 1):
            result = self._exchange(prompt, key)
            parsed = parse_response(result.text, obs)
            if isinstance(parsed, AgentAction):
                return parsed
            failure = parsed
            prompt = render_retry_prompt(prompt, failure)
        raise ParseRetriesExhausted(
            f"unusable response after {self.max_parse_retries} retries: "
            f"{failure.reason} ({failure.detail})")

    def reflect(self, obs: AgentObservation) -> str:
        prompt = render_practice_reflection_prompt(obs, self.config)
        key = f"{self.agent_id}:{obs.phase}:{obs.round}:reflect"
        for _ in range(self.max_parse_retries + 1):
            result = self._exchange(prompt, key)
            parsed = parse_reflection(result.text)
            if isinstance(parsed, str):
                return parsed
            prompt = render_retry_prompt(prompt, parsed)
        return ""
