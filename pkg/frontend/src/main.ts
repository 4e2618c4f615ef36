/** Console wiring: DOM updates driven by the pure view model and renderers. */

import { ApiError, createSession, sendInstruction, subscribe, type Subscription } from "./api.js";
import { renderBanner, renderRobotPanel, renderTimeline, type ConnectionState } from "./render.js";
import { initialViewModel, reduceEvent, type ViewModel } from "./view-model.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const serviceInput = element<HTMLInputElement>("service-url");
const backendInput = element<HTMLInputElement>("backend-spec");
const regionSelect = element<HTMLSelectElement>("region");
const createButton = element<HTMLButtonElement>("create-session");
const instructionInput = element<HTMLInputElement>("instruction");
const sendButton = element<HTMLButtonElement>("send-instruction");
const inputNote = element<HTMLSpanElement>("input-note");
const banner = element<HTMLDivElement>("banner");
const timelineContainer = element<HTMLDivElement>("timeline-container");
const robotContainer = element<HTMLDivElement>("robot-container");
const sessionLabel = element<HTMLSpanElement>("session-label");

let model: ViewModel = initialViewModel();
let connection: ConnectionState = "closed";
let sessionId: string | null = null;
let subscription: Subscription | null = null;
let started = false;

const params = new URLSearchParams(window.location.search);
serviceInput.value = params.get("service") ?? "http://127.0.0.1:8080";

function redraw(detail = ""): void {
  banner.innerHTML = renderBanner(model, connection, detail);
  timelineContainer.innerHTML = renderTimeline(model);
  robotContainer.innerHTML = renderRobotPanel(model);
  timelineContainer.scrollTop = timelineContainer.scrollHeight;
  sessionLabel.textContent = sessionId ? `session ${sessionId.slice(0, 8)}` : "no session";
}

function setInputEnabled(enabled: boolean, note = ""): void {
  instructionInput.disabled = !enabled;
  sendButton.disabled = !enabled;
  inputNote.textContent = note;
}

function watch(): void {
  if (!sessionId) return;
  subscription?.close();
  subscription = subscribe(serviceInput.value, sessionId, {
    onEvent(event) {
      model = reduceEvent(model, event);
      if (event.type === "summary") {
        if (model.sessionState === "awaiting_instruction") {
          setInputEnabled(true, "episode complete; you can send a follow-up");
        } else if (model.sessionState === "finished") {
          setInputEnabled(false, "session finished");
        }
      }
      redraw();
    },
    onConnectionChange(state, detail) {
      connection = state;
      redraw(detail ?? "");
    },
  });
}

createButton.addEventListener("click", () => {
  void (async () => {
    try {
      model = initialViewModel();
      started = false;
      sessionId = await createSession(serviceInput.value, {
        backend: backendInput.value,
        region: regionSelect.value,
      });
      setInputEnabled(true, "session created; send the first instruction");
      redraw();
    } catch (error) {
      connection = "error";
      redraw(error instanceof Error ? error.message : String(error));
    }
  })();
});

sendButton.addEventListener("click", () => {
  void (async () => {
    const text = instructionInput.value.trim();
    if (!text) {
      inputNote.textContent = "instruction must not be empty";
      return; // rejected client-side, no request goes out
    }
    if (!sessionId) {
      inputNote.textContent = "create a session first";
      return;
    }
    setInputEnabled(false, "sending...");
    try {
      await sendInstruction(serviceInput.value, sessionId, text);
      instructionInput.value = "";
      setInputEnabled(true, "");
      if (!started || model.sessionState !== "running") {
        started = true;
        watch();
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        setInputEnabled(false, "session already finished; instructions are closed");
      } else {
        setInputEnabled(true, error instanceof Error ? error.message : String(error));
      }
    }
  })();
});

instructionInput.addEventListener("keydown", (event) => {
  if (event.key === "Enter" && !sendButton.disabled) sendButton.click();
});

setInputEnabled(false, "create a session to begin");
redraw();
