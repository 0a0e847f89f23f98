// Shared fixtures: a full registry, a maximal turn payload (one failed
// contribution, every optional field populated) and a recorded SSE stream.

import type {
  ChatTurnResponse,
  ConversationState,
  LabelScore,
  RoutingDecision,
  SpecialistResponse,
  SpecialtyLabel,
} from "./types.js";

export const REGISTRY: SpecialtyLabel[] = [
  { id: "cardiology_hematology", display_name: "Cardiology and Hematology" },
  { id: "dermatology_aesthetics", display_name: "Dermatology and Aesthetics" },
  { id: "eye_ent_pulmonology", display_name: "Eye, ENT and Pulmonology" },
  { id: "gastroenterology", display_name: "Gastroenterology" },
  { id: "general_medicine_surgery", display_name: "General Medicine and Surgery" },
  { id: "gynecology", display_name: "Gynecology" },
  { id: "mental_health", display_name: "Mental Health" },
  { id: "neurology", display_name: "Neurology" },
  { id: "orthopedics", display_name: "Orthopedics" },
  { id: "urology_andrology", display_name: "Urology and Andrology" },
];

export function scoresFixture(): LabelScore[] {
  return REGISTRY.map((label, i) => ({ label, score: Math.round((0.05 + i * 0.09) * 1000) / 1000 }));
}

export function decisionFixture(): RoutingDecision {
  const all = scoresFixture();
  const selected = [...all].sort((a, b) => b.score - a.score).slice(0, 2);
  return { strategy: { kind: "top_n", n: 2 }, selected, fallback_used: false, all_scores: all };
}

export const OK_CARD: SpecialistResponse = {
  specialty: REGISTRY[9],
  text: "Risposta urologica dettagliata.",
  status: "ok",
  latency_ms: 412,
};

export const FAILED_CARD: SpecialistResponse = {
  specialty: REGISTRY[8],
  text: "",
  status: "timeout",
  latency_ms: 2000,
};

export function maximalTurnPayload(): ChatTurnResponse {
  const decision = decisionFixture();
  return {
    session_id: "sess-42",
    final: {
      text: "Risposta finale sintetizzata per il paziente.",
      decision,
      contributions: [OK_CARD, FAILED_CARD],
      reformulated_question: "Domanda riformulata e autonoma?",
    },
    router_scores: decision.all_scores,
    reformulated_question: "Domanda riformulata e autonoma?",
    degraded: true,
    timings: { reformulate_ms: 120, route_ms: 8, dispatch_ms: 2050, synthesize_ms: 430, total_ms: 2610 },
  };
}

function sse(id: number, event: string, data: unknown): string {
  return `id: ${id}\nevent: ${event}\ndata: ${JSON.stringify(data)}\n\n`;
}

/** A recorded stream: routing -> two specialist cards -> final. */
export function recordedStream(): string {
  const payload = maximalTurnPayload();
  return (
    sse(0, "routing", payload.final.decision) +
    sse(1, "specialist", OK_CARD) +
    sse(2, "specialist", FAILED_CARD) +
    sse(3, "final", payload)
  );
}

/** A stream that dies after one specialist card. */
export function failingStream(): string {
  return (
    sse(0, "routing", decisionFixture()) +
    sse(1, "specialist", OK_CARD) +
    sse(2, "error", { message: "synthesis failed", session_id: "sess-42" })
  );
}

export function threeTurnSession(): ConversationState {
  const decision = decisionFixture();
  const answerFor = (text: string) => ({
    text,
    decision,
    contributions: [OK_CARD, FAILED_CARD],
    reformulated_question: `riformulata: ${text}`,
  });
  return {
    session_id: "sess-42",
    turns: [
      { user_question: "prima domanda", reformulated_question: "prima domanda", answer: answerFor("risposta uno") },
      { user_question: "seconda domanda", reformulated_question: "riscritta due", answer: answerFor("risposta due") },
      { user_question: "terza domanda", reformulated_question: "riscritta tre", answer: answerFor("risposta tre") },
    ],
    created_at: "2026-08-01T10:00:00+00:00",
    updated_at: "2026-08-01T10:05:00+00:00",
  };
}

export function streamFromString(text: string, chunkSize = 7): ReadableStream<Uint8Array> {
  const bytes = new TextEncoder().encode(text);
  let offset = 0;
  return new ReadableStream<Uint8Array>({
    pull(controller) {
      if (offset >= bytes.length) {
        controller.close();
        return;
      }
      controller.enqueue(bytes.slice(offset, offset + chunkSize));
      offset += chunkSize;
    },
  });
}
