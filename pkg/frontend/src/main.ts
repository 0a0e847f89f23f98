// DOM wiring: session restore, specialist picker, one in-flight turn at a time.

import { buildChatBody, fetchSession, fetchSpecialists, streamChat } from "./api.js";
import { buildPickerOptions, renderTurn } from "./render.js";
import { applyEvent, newTurn, sessionIdFromFinal, turnsFromSession } from "./viewmodel.js";
import type { TurnViewModel } from "./viewmodel.js";

const SESSION_KEY = "medroute.session_id";

// Same-origin by default; ?api=http://host:port targets a gateway elsewhere.
const API_BASE = new URLSearchParams(window.location.search).get("api") ?? "";

const messagesEl = document.getElementById("messages") as HTMLDivElement;
const formEl = document.getElementById("composer") as HTMLFormElement;
const inputEl = document.getElementById("message") as HTMLInputElement;
const sendEl = document.getElementById("send") as HTMLButtonElement;
const pickerEl = document.getElementById("specialist") as HTMLSelectElement;

let sessionId: string | null = localStorage.getItem(SESSION_KEY);
const turns: TurnViewModel[] = [];

function paint(): void {
  messagesEl.innerHTML = turns.map(renderTurn).join("");
  messagesEl.scrollTop = messagesEl.scrollHeight;
}

function setBusy(busy: boolean): void {
  sendEl.disabled = busy;
  inputEl.disabled = busy;
  pickerEl.disabled = busy || pickerEl.dataset.unavailable === "1";
}

async function loadPicker(): Promise<void> {
  try {
    const registry = await fetchSpecialists(API_BASE);
    pickerEl.innerHTML = buildPickerOptions(registry)
      .map((o) => `<option value="${o.value}">${o.label}</option>`)
      .join("");
  } catch {
    pickerEl.innerHTML = buildPickerOptions(null)
      .map((o) => `<option value="${o.value}">${o.label}</option>`)
      .join("");
    pickerEl.disabled = true;
    pickerEl.dataset.unavailable = "1";
    pickerEl.title = "specialist registry unavailable; automatic routing only";
  }
}

async function restoreSession(): Promise<void> {
  if (!sessionId) return;
  try {
    const state = await fetchSession(sessionId, API_BASE);
    if (state === null) {
      sessionId = null;
      localStorage.removeItem(SESSION_KEY);
      return;
    }
    turns.push(...turnsFromSession(state));
    paint();
  } catch {
    // gateway unreachable; leave the stored id for the next load
  }
}

formEl.addEventListener("submit", async (submitEvent) => {
  submitEvent.preventDefault();
  const message = inputEl.value.trim();
  if (!message) return;
  const target = pickerEl.value || null;
  const turn = newTurn(message, target);
  turns.push(turn);
  inputEl.value = "";
  setBusy(true);
  paint();
  try {
    await streamChat(
      buildChatBody(message, sessionId, target),
      (event) => {
        applyEvent(turn, event);
        const sid = sessionIdFromFinal(event);
        if (sid) {
          sessionId = sid;
          localStorage.setItem(SESSION_KEY, sid);
        }
        paint();
      },
      API_BASE,
    );
  } catch (err) {
    turn.error = err instanceof Error ? err.message : String(err);
    turn.done = true;
    paint();
  } finally {
    setBusy(false);
    inputEl.focus();
  }
});

void loadPicker();
void restoreSession();
