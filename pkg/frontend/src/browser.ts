// Browser bootstrap for both consoles. The page sets window.OZWOZ_ROLE;
// the join URL (the page's own location) carries the capability token.
// Everything interesting lives in the state/render modules; this file only
// wires the real WebSocket, the DOM and the keyboard.

import { Channel, ChannelTransport, Message, channelUrl } from "./protocol.js";
import { Schema } from "./schema.js";
import * as wizard from "./wizard/state.js";
import { renderWizardConsole } from "./wizard/render.js";
import * as participant from "./participant/state.js";
import { deliverOutput, renderParticipantPage } from "./participant/render.js";

declare global {
  interface Window { OZWOZ_ROLE?: "wizard" | "participant"; }
}

function webSocketTransport(url: string): ChannelTransport {
  const socket = new WebSocket(url);
  return {
    send: (text) => socket.send(text),
    close: () => socket.close(),
    onMessage: (handler) => { socket.onmessage = (ev) => handler(String(ev.data)); },
    onClose: (handler) => { socket.onclose = () => handler(); },
  };
}

async function fetchSchema(): Promise<Schema> {
  const response = await fetch("/schema/messages.json");
  return (await response.json()) as Schema;
}

async function mountWizard(root: HTMLElement, schema: Schema): Promise<void> {
  const view = wizard.emptyWizardView();
  const channel = new Channel({
    schema,
    connect: () => webSocketTransport(channelUrl(window.location.href)),
  });
  const redraw = () => { root.innerHTML = renderWizardConsole(view); };
  const trySend = (make: () => Message | null) => {
    try {
      const message = make();
      if (message) channel.send(message);
    } catch (err) {
      view.toast = String((err as Error).message ?? err);
    }
    redraw();
  };

  channel.onMessage((message) => {
    wizard.applyServerMessage(view, message);
    redraw();
  });

  root.addEventListener("click", (ev) => {
    const el = ev.target as HTMLElement;
    const button = el.closest("button");
    if (!button) return;
    if (button.dataset.stage) trySend(() => wizard.switchStage(view, button.dataset.stage!));
    else if (button.dataset.utterance) trySend(() => wizard.clickUtterance(view, button.dataset.utterance!));
    else if (button.dataset.index !== undefined) trySend(() => wizard.pickCandidate(view, Number(button.dataset.index)));
    else if (button.classList.contains("send-correction")) trySend(() => wizard.sendCorrection(view));
    else if (button.classList.contains("approve")) trySend(() => wizard.approveOutput(view));
    else if (button.classList.contains("end-session")) trySend(() => wizard.endSession());
  });
  root.addEventListener("input", (ev) => {
    const el = ev.target as HTMLInputElement;
    if (el.classList.contains("correction")) wizard.editCorrection(view, el.value);
    if (el.dataset.slot) wizard.setBinding(view, el.dataset.slot, el.value);
    if (el.classList.contains("filter")) {
      trySend(() => wizard.changeFilter(view, el.dataset.attribute!,
        el.value.split(",").map((s) => s.trim()).filter(Boolean)));
    }
  });
  root.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const form = ev.target as HTMLFormElement;
    if (form.classList.contains("chat-box")) {
      const input = form.elements.namedItem("chat") as HTMLInputElement;
      trySend(() => wizard.sendChat(view, input.value));
      input.value = "";
    } else if (form.classList.contains("binding-form")) {
      trySend(() => wizard.submitBindingForm(view));
    } else if (form.classList.contains("note-form")) {
      const input = form.elements.namedItem("note") as HTMLInputElement;
      trySend(() => wizard.addNote(view, input.value));
      input.value = "";
    }
  });
  document.addEventListener("keydown", (ev) => {
    if ((ev.target as HTMLElement).tagName === "INPUT"
        || (ev.target as HTMLElement).tagName === "TEXTAREA") return;
    const message = wizard.handleKey(view, ev.key);
    if (message) {
      ev.preventDefault();
      channel.send(message);
      redraw();
    }
  });

  channel.open();
  redraw();
}

function playAsset(assetId: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const audio = new Audio(`/assets/${assetId}`);
    audio.onended = () => resolve();
    audio.onerror = () => reject(new Error("asset failed"));
    audio.play().catch(reject);
  });
}

async function mountParticipant(root: HTMLElement, schema: Schema): Promise<void> {
  const view = participant.emptyParticipantView();
  const channel = new Channel({
    schema,
    connect: () => webSocketTransport(channelUrl(window.location.href)),
  });
  const redraw = () => { root.innerHTML = renderParticipantPage(view); };

  channel.onMessage((message) => {
    const output = participant.applyParticipantMessage(view, message);
    redraw();
    if (output) {
      void deliverOutput(output, (m) => channel.send(m), playAsset, () => redraw());
    }
  });
  root.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = (ev.target as HTMLFormElement).elements.namedItem("text") as HTMLInputElement;
    if (input.value.trim()) {
      channel.send(participant.participantInput(input.value));
      input.value = "";
    }
  });
  channel.open();
  redraw();
}

async function main(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const schema = await fetchSchema();
  if (window.OZWOZ_ROLE === "participant") await mountParticipant(root, schema);
  else await mountWizard(root, schema);
}

void main();
