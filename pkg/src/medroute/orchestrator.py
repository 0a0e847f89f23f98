"""Synthesis of specialist answers into one final response.

A structured prompt frames a stronger backend model as a professional
medical assistant merging the expert contributions; with a single healthy
contribution the answer passes through verbatim (no model call).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import FinalAnswer, RoutingDecision, SpecialistResponse
from .errors import ConfigurationError, InvalidInputError, MedrouteError, SynthesisFailedError
from .model_client import ChatMessage, CompletionRequest, complete
from .specialists import DispatchResult

log = logging.getLogger(__name__)

# Versioned default; override per deployment via OrchestratorConfig.
DEFAULT_SYNTHESIS_TEMPLATE = (
    "You are a professional medical assistant. Several medical specialists "
    "have each drafted an answer to the user's question. Merge their "
    "contributions into a single clear, evidence-based and contextually "
    "appropriate answer, aligned with the user's question. Filter out "
    "incorrect or irrelevant content, do not mention the individual "
    "specialists, and reply in the user's language."
)


@dataclass(frozen=True)
class OrchestratorConfig:
    endpoint: str
    model_id: str
    synthesis_prompt_template: str = DEFAULT_SYNTHESIS_TEMPLATE
    timeout_ms: int = 60_000
    single_specialist_passthrough: bool = True
    max_tokens: int = 1024
    temperature: float = 0.3
    retries: int = 2
    api_token: str | None = None

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ConfigurationError("timeout_ms must be positive")


def build_synthesis_prompt(
    question: str,
    responses: list[SpecialistResponse] | tuple[SpecialistResponse, ...],
    template: str = DEFAULT_SYNTHESIS_TEMPLATE,
) -> list[ChatMessage]:
    """System instruction plus the question and each healthy contribution,
    labeled "[<Specialty>]: <text>" in selection order. Failed contributions
    are omitted: the model should not reason over error placeholders."""
    ok_responses = [r for r in responses if r.ok]
    if not ok_responses:
        raise InvalidInputError("synthesis needs at least one ok specialist response")
    blocks = [question.strip(), ""]
    blocks.extend(f"[{r.specialty.display_name}]: {r.text}" for r in ok_responses)
    return [
        ChatMessage(role="system", content=template),
        ChatMessage(role="user", content="\n".join(blocks)),
    ]


async def synthesize(
    question: str,
    result: DispatchResult,
    decision: RoutingDecision,
    config: OrchestratorConfig,
) -> FinalAnswer:
    """Produce the final answer for one turn.

    The full contributions list (including failed entries) is carried on the
    FinalAnswer for UI transparency; only healthy text reaches the model.
    """
    ok_responses = [r for r in result.responses if r.ok]
    if not ok_responses:
        raise InvalidInputError("synthesis needs at least one ok specialist response")

    if config.single_specialist_passthrough and len(ok_responses) == 1:
        return FinalAnswer(
            text=ok_responses[0].text,
            decision=decision,
            contributions=result.responses,
            reformulated_question=question,
        )

    messages = build_synthesis_prompt(question, result.responses, config.synthesis_prompt_template)
    request = CompletionRequest(
        model_id=config.model_id,
        messages=tuple(messages),
        max_tokens=config.max_tokens,
        temperature=config.temperature,
    )
    try:
        text = await complete(
            config.endpoint,
            request,
            timeout_ms=config.timeout_ms,
            retries=config.retries,
            api_token=config.api_token,
        )
    except MedrouteError as exc:
        log.error("synthesis backend failed: %s", exc)
        raise SynthesisFailedError(str(exc), contributions=result.responses) from exc
    return FinalAnswer(
        text=text,
        decision=decision,
        contributions=result.responses,
        reformulated_question=question,
    )
