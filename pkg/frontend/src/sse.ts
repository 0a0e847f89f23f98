// Server-sent-events parsing over a fetch body stream. The gateway streams
// stage events from a POST endpoint, which EventSource cannot speak, so we
// decode the text/event-stream frames ourselves.

import type { SseEvent } from "./types.js";

export function parseSseFrame(frame: string): SseEvent | null {
  let id: number | null = null;
  let event = "message";
  const dataLines: string[] = [];
  for (const rawLine of frame.split(/\r?\n/)) {
    if (rawLine.startsWith("id:")) {
      const parsed = Number(rawLine.slice(3).trim());
      id = Number.isNaN(parsed) ? null : parsed;
    } else if (rawLine.startsWith("event:")) {
      event = rawLine.slice(6).trim();
    } else if (rawLine.startsWith("data:")) {
      dataLines.push(rawLine.slice(5).trim());
    }
  }
  if (dataLines.length === 0) return null;
  const raw = dataLines.join("\n");
  try {
    return { id, event, data: JSON.parse(raw) };
  } catch {
    return { id, event, data: raw };
  }
}

export async function readSseStream(
  body: ReadableStream<Uint8Array>,
  onEvent: (e: SseEvent) => void,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder("utf-8");
  let buffer = "";
  while (true) {
    const { value, done } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    const frames = buffer.split(/\r?\n\r?\n/);
    buffer = frames.pop() ?? "";
    for (const frame of frames) {
      const parsed = parseSseFrame(frame);
      if (parsed) onEvent(parsed);
    }
  }
  const tail = parseSseFrame(buffer);
  if (tail) onEvent(tail);
}
