// Participant-facing rendering and the delivery/acknowledgement logic.

import { Message } from "../protocol.js";
import {
  OutputView,
  ParticipantViewState,
  assetError,
  deliveryAck,
} from "./state.js";

export function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderParticipantPage(view: ParticipantViewState): string {
  const rows = view.outputs.map((o, i) => {
    const latest = i === view.outputs.length - 1 ? " latest" : "";
    return `<li class="output${latest}">${escapeHtml(o.text ?? "")}</li>`;
  }).join("");
  const busy = view.busy ? `<p class="busy">…</p>` : "";
  const toast = view.toast ? `<p class="toast">${escapeHtml(view.toast)}</p>` : "";
  const input = view.ended
    ? `<p class="ended">The session has ended. Thank you!</p>`
    : `<form class="participant-input"><input name="text" autocomplete="off">` +
      `<button type="submit">Send</button></form>`;
  return `<main class="participant"><ol class="outputs">${rows}</ol>${busy}${toast}${input}</main>`;
}

/** Plays audio or shows text, then acknowledges delivery.
 *
 * The audio clock is injected (`play` resolves when playback finishes) so the
 * logic is testable without real media. On a fetch/playback failure the text
 * fallback is shown and an Error goes to the server. */
export async function deliverOutput(
  output: OutputView,
  send: (message: Message) => void,
  play: (assetId: string) => Promise<void>,
  showText: (text: string) => void,
): Promise<void> {
  if (output.audioAsset) {
    try {
      await play(output.audioAsset);
      send(deliveryAck(output.seq, "PlaybackFinished"));
      return;
    } catch {
      send(assetError(output.audioAsset));
      // fall through to the textual fallback
    }
  }
  showText(output.text ?? "");
  send(deliveryAck(output.seq, "Displayed"));
}
