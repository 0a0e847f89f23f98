// Wire types mirroring the gateway's JSON contracts (snake_case preserved).

export interface SpecialtyLabel {
  id: string;
  display_name: string;
}

export interface LabelScore {
  label: SpecialtyLabel;
  score: number;
}

export interface Strategy {
  kind: "top_n" | "threshold" | "forced";
  n?: number;
  tau?: number;
  label?: string;
}

export interface RoutingDecision {
  strategy: Strategy;
  selected: LabelScore[];
  fallback_used: boolean;
  all_scores: LabelScore[];
}

export type ResponseStatus = "ok" | "timeout" | "backend_error";

export interface SpecialistResponse {
  specialty: SpecialtyLabel;
  text: string;
  status: ResponseStatus;
  latency_ms: number;
}

export interface FinalAnswer {
  text: string;
  decision: RoutingDecision;
  contributions: SpecialistResponse[];
  reformulated_question: string;
}

export interface ChatTurnResponse {
  session_id: string;
  final: FinalAnswer;
  router_scores: LabelScore[];
  reformulated_question: string;
  degraded: boolean;
  timings: Record<string, number>;
}

export interface ConversationTurn {
  user_question: string;
  reformulated_question: string;
  answer: FinalAnswer;
}

export interface ConversationState {
  session_id: string;
  turns: ConversationTurn[];
  created_at: string;
  updated_at: string;
}

export interface SseEvent {
  id: number | null;
  event: string;
  data: unknown;
}
