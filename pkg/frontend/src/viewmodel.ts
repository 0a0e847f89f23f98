// Turn view models: reduce live SSE events (or a restored session) into
// everything the renderer shows. The console keeps no other client state
// than the session id plus these rendered turns.

import type {
  ChatTurnResponse,
  ConversationState,
  LabelScore,
  RoutingDecision,
  SpecialistResponse,
  SseEvent,
} from "./types.js";

export interface TurnViewModel {
  userMessage: string;
  targetSpecialist: string | null;
  reformulatedQuestion: string | null;
  scores: LabelScore[]; // always the full 10 once routing arrived
  selectedIds: string[];
  fallbackUsed: boolean;
  forced: boolean;
  cards: SpecialistResponse[]; // arrival order
  finalText: string | null;
  degraded: boolean;
  timings: Record<string, number> | null;
  error: string | null;
  done: boolean;
}

export function newTurn(userMessage: string, targetSpecialist: string | null = null): TurnViewModel {
  return {
    userMessage,
    targetSpecialist,
    reformulatedQuestion: null,
    scores: [],
    selectedIds: [],
    fallbackUsed: false,
    forced: targetSpecialist !== null,
    cards: [],
    finalText: null,
    degraded: false,
    timings: null,
    error: null,
    done: false,
  };
}

function applyRouting(turn: TurnViewModel, decision: RoutingDecision): void {
  turn.scores = decision.all_scores;
  turn.selectedIds = decision.selected.map((ls) => ls.label.id);
  turn.fallbackUsed = decision.fallback_used;
  turn.forced = decision.strategy.kind === "forced";
}

export function applyEvent(turn: TurnViewModel, event: SseEvent): TurnViewModel {
  switch (event.event) {
    case "routing":
      applyRouting(turn, event.data as RoutingDecision);
      break;
    case "specialist":
      turn.cards = [...turn.cards, event.data as SpecialistResponse];
      break;
    case "final": {
      const payload = event.data as ChatTurnResponse;
      turn.finalText = payload.final.text;
      turn.scores = payload.router_scores;
      turn.reformulatedQuestion = payload.reformulated_question;
      turn.degraded = payload.degraded;
      turn.timings = payload.timings;
      turn.done = true;
      break;
    }
    case "error":
      turn.error = String((event.data as { message?: string }).message ?? "stream failed");
      turn.done = true;
      break;
  }
  return turn;
}

export function sessionIdFromFinal(event: SseEvent): string | null {
  if (event.event !== "final") return null;
  return (event.data as ChatTurnResponse).session_id ?? null;
}

/** Rebuild rendered turns from the sessions endpoint after a refresh. */
export function turnsFromSession(state: ConversationState): TurnViewModel[] {
  return state.turns.map((stored) => {
    const turn = newTurn(stored.user_question);
    applyRouting(turn, stored.answer.decision);
    turn.cards = stored.answer.contributions;
    turn.finalText = stored.answer.text;
    turn.reformulatedQuestion = stored.reformulated_question;
    turn.degraded = stored.answer.contributions.some((c) => c.status !== "ok");
    turn.done = true;
    return turn;
  });
}
