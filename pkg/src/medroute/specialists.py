"""Specialist backend registry and concurrent scatter-gather dispatch.

Each selected specialty gets one chat-completion request, issued concurrently
with its own timeout; a slow or failed specialist degrades only its own slot.
Partial results are forwarded downstream rather than failing the turn: the
orchestrator is the filter for bad contributions.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass
from string import Formatter
from typing import AsyncIterator, Mapping

from .core import RoutingDecision, SpecialistResponse, SpecialtyLabel
from .errors import (
    BackendError,
    CompletionTimeout,
    ConfigurationError,
    InvalidInputError,
    MedrouteError,
    UpstreamUnavailableError,
)
from .model_client import ChatMessage, CompletionRequest, complete

log = logging.getLogger(__name__)

DEFAULT_SPECIALIST_TEMPLATE = (
    "You are a medical specialist in {specialty_name}. Answer the user's "
    "question with guidance grounded in your specialty, in a consistent "
    "professional style, and reply in the user's language."
)


@dataclass(frozen=True)
class SpecialistConfig:
    """One specialist backend; a valid deployment has exactly one per specialty."""

    specialty: SpecialtyLabel
    endpoint: str
    model_id: str
    system_prompt_template: str = DEFAULT_SPECIALIST_TEMPLATE
    timeout_ms: int = 30_000
    max_tokens: int = 1024
    temperature: float = 0.7  # decoding defaults are exposed, not validated clinically
    api_token: str | None = None

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ConfigurationError("timeout_ms must be positive")
        if self.max_tokens <= 0:
            raise ConfigurationError("max_tokens must be positive")


@dataclass(frozen=True)
class DispatchResult:
    """All specialist responses for one turn, in selection order."""

    responses: tuple[SpecialistResponse, ...]
    elapsed_ms: int
    degraded: bool


def render_specialist_prompt(config: SpecialistConfig, question: str) -> list[ChatMessage]:
    """[system with {specialty_name} substituted, user question]; deterministic."""
    if not question.strip():
        raise InvalidInputError("question is empty")
    fields = {name for _, name, _, _ in Formatter().parse(config.system_prompt_template) if name}
    unknown = fields - {"specialty_name"}
    if unknown:
        raise ConfigurationError(
            f"specialist prompt template for {config.specialty.id!r} has "
            f"unresolved placeholders: {sorted(unknown)}"
        )
    system = config.system_prompt_template.format(specialty_name=config.specialty.display_name)
    return [ChatMessage(role="system", content=system), ChatMessage(role="user", content=question)]


async def _ask_one(config: SpecialistConfig, question: str) -> SpecialistResponse:
    messages = render_specialist_prompt(config, question)
    request = CompletionRequest(
        model_id=config.model_id,
        messages=tuple(messages),
        max_tokens=config.max_tokens,
        temperature=config.temperature,
    )
    started = time.monotonic()
    try:
        text = await complete(
            config.endpoint, request, timeout_ms=config.timeout_ms, api_token=config.api_token
        )
        status = "ok" if text else "backend_error"
    except CompletionTimeout:
        text, status = "", "timeout"
    except (BackendError, MedrouteError) as exc:
        log.warning("specialist %s failed: %s", config.specialty.id, exc)
        text, status = "", "backend_error"
    latency_ms = int((time.monotonic() - started) * 1000)
    return SpecialistResponse(
        specialty=config.specialty,
        text=text if status == "ok" else "",
        status=status,
        latency_ms=latency_ms,
    )


def _configs_for(
    decision: RoutingDecision, registry: Mapping[str, SpecialistConfig]
) -> list[SpecialistConfig]:
    configs = []
    for ls in decision.selected:
        config = registry.get(ls.label.id)
        if config is None:
            raise ConfigurationError(f"no specialist configured for {ls.label.id!r}")
        configs.append(config)
    return configs


async def dispatch_stream(
    decision: RoutingDecision, question: str, registry: Mapping[str, SpecialistConfig]
) -> AsyncIterator[SpecialistResponse]:
    """Fan out to every selected specialist; yield responses in completion order."""
    if not question.strip():
        raise InvalidInputError("question is empty")
    configs = _configs_for(decision, registry)
    tasks = [asyncio.ensure_future(_ask_one(cfg, question)) for cfg in configs]
    try:
        for fut in asyncio.as_completed(tasks):
            yield await fut
    finally:
        for task in tasks:  # a cancelled stream must not leak sibling requests
            task.cancel()


async def dispatch(
    decision: RoutingDecision, question: str, registry: Mapping[str, SpecialistConfig]
) -> DispatchResult:
    """Scatter-gather dispatch; responses come back in selection order.

    Raises UpstreamUnavailableError when not a single specialist answered.
    """
    started = time.monotonic()
    by_id: dict[str, SpecialistResponse] = {}
    async for response in dispatch_stream(decision, question, registry):
        by_id[response.specialty.id] = response
    ordered = tuple(by_id[ls.label.id] for ls in decision.selected)
    elapsed_ms = int((time.monotonic() - started) * 1000)
    if not any(r.ok for r in ordered):
        raise UpstreamUnavailableError(
            f"all {len(ordered)} dispatched specialists failed "
            f"({', '.join(r.specialty.id + ':' + r.status for r in ordered)})"
        )
    return DispatchResult(
        responses=ordered,
        elapsed_ms=elapsed_ms,
        degraded=any(not r.ok for r in ordered),
    )
