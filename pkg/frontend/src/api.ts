// Thin client over the gateway's /v1 surface.

import { readSseStream } from "./sse.js";
import type { ConversationState, SpecialtyLabel, SseEvent } from "./types.js";

export interface ChatRequestBody {
  message: string;
  session_id?: string;
  target_specialist?: string;
}

export function buildChatBody(
  message: string,
  sessionId: string | null,
  targetSpecialist: string | null,
): ChatRequestBody {
  const body: ChatRequestBody = { message };
  if (sessionId) body.session_id = sessionId;
  if (targetSpecialist) body.target_specialist = targetSpecialist;
  return body;
}

export async function fetchSpecialists(base = ""): Promise<SpecialtyLabel[]> {
  const resp = await fetch(`${base}/v1/specialists`);
  if (!resp.ok) throw new Error(`specialists registry failed: HTTP ${resp.status}`);
  const payload = (await resp.json()) as { specialists: SpecialtyLabel[] };
  return payload.specialists;
}

export async function fetchSession(
  sessionId: string,
  base = "",
): Promise<ConversationState | null> {
  const resp = await fetch(`${base}/v1/sessions/${encodeURIComponent(sessionId)}`);
  if (resp.status === 404) return null;
  if (!resp.ok) throw new Error(`session fetch failed: HTTP ${resp.status}`);
  return (await resp.json()) as ConversationState;
}

export async function streamChat(
  body: ChatRequestBody,
  onEvent: (e: SseEvent) => void,
  base = "",
): Promise<void> {
  const resp = await fetch(`${base}/v1/chat/stream`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok || !resp.body) {
    let detail = `HTTP ${resp.status}`;
    try {
      const parsed = (await resp.json()) as { detail?: string };
      if (parsed.detail) detail = parsed.detail;
    } catch {
      // keep the status-based message
    }
    throw new Error(detail);
  }
  await readSseStream(resp.body, onEvent);
}
