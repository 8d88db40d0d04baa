// Participant client view model: exactly what the test subject may see.
// The denylist guard is belt-and-braces on top of the server's role
// filtering; if a wizard-only field ever reaches this client, we fail loudly
// rather than render it.

import { Message } from "../protocol.js";

export interface OutputView {
  seq: number;
  text: string | null;
  audioAsset: string | null;
}

export interface ParticipantViewState {
  sessionId: string | null;
  sessionState: string;
  outputs: OutputView[];
  busy: boolean;
  toast: string | null;
  ended: boolean;
}

// field names that belong to the wizard side and must never appear in
// anything this client consumes or renders
export const WIZARD_ONLY_FIELDS = new Set([
  "utterances", "stages", "frequently_used", "domain_records", "filters",
  "notes", "candidates", "editable_text", "task", "tasks", "pending",
  "history", "input_text", "adapter_id", "wizard_token", "instructions",
]);

export class RoleLeak extends Error {}

export function assertNoWizardFields(value: unknown, path = "$"): void {
  if (Array.isArray(value)) {
    value.forEach((v, i) => assertNoWizardFields(v, `${path}[${i}]`));
  } else if (value !== null && typeof value === "object") {
    for (const [key, sub] of Object.entries(value as Record<string, unknown>)) {
      if (WIZARD_ONLY_FIELDS.has(key)) {
        throw new RoleLeak(`wizard-only field '${key}' at ${path}`);
      }
      assertNoWizardFields(sub, `${path}.${key}`);
    }
  }
}

export function emptyParticipantView(): ParticipantViewState {
  return { sessionId: null, sessionState: "Created", outputs: [], busy: false,
           toast: null, ended: false };
}

/** Apply one inbound message; returns the new output to deliver, if any. */
export function applyParticipantMessage(view: ParticipantViewState,
                                        message: Message): OutputView | null {
  assertNoWizardFields(message);
  const payload: any = message.payload ?? {};
  switch (message.type) {
    case "hello":
    case "state_sync": {
      view.sessionId = message.session_id ?? payload.session_id ?? view.sessionId;
      view.sessionState = payload.state ?? view.sessionState;
      if (payload.outputs) {
        view.outputs = payload.outputs.map((o: any) => ({
          seq: o.seq, text: o.text ?? null, audioAsset: o.audio_asset ?? null,
        }));
      }
      if (typeof payload.busy === "boolean") view.busy = payload.busy;
      return null;
    }
    case "SystemOutput": {
      const output: OutputView = {
        seq: message.seq!,
        text: payload.text ?? null,
        audioAsset: payload.audio_asset ?? null,
      };
      view.outputs.push(output);
      view.busy = false;
      return output;
    }
    case "busy":
      view.busy = true;
      view.toast = payload.message ?? "please wait";
      return null;
    case "protocol_error":
      view.toast = payload.message ?? "rejected";
      return null;
    case "SessionEnd":
      view.ended = true;
      view.sessionState = "Ended";
      return null;
  }
  return null;
}

export function participantInput(text: string): Message {
  return { type: "ParticipantInput", payload: { kind: "text", text } };
}

export function speechMarker(): Message {
  return { type: "ParticipantInput", payload: { kind: "speech_marker" } };
}

export function deliveryAck(outputSeq: number,
                            kind: "Displayed" | "PlaybackFinished"): Message {
  return { type: "DeliveryAck", payload: { output_seq: outputSeq, kind } };
}

export function assetError(assetId: string): Message {
  return { type: "Error",
           payload: { message: `audio asset ${assetId} could not be played` } };
}
