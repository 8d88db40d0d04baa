// Stub server fixture: canned role-filtered views and event messages shaped
// exactly like the server's channel frames, plus a scripted transport.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { ChannelTransport, Message } from "../src/protocol.js";
import { Schema } from "../src/schema.js";

const here = dirname(fileURLToPath(import.meta.url));

export function messageSchema(): Schema {
  const path = join(here, "..", "..", "schema", "messages.json");
  return JSON.parse(readFileSync(path, "utf-8")) as Schema;
}

export const WIZARD_SYNC: Message = {
  type: "state_sync",
  session_id: "sess-fixture",
  ts: 1700000001000,
  payload: {
    session_id: "sess-fixture",
    state: "Running",
    experiment: {
      id: "exp-fixture",
      name: "call-center",
      chat_enabled: true,
      stages: [
        { id: "greeting", title: "Greeting", utterance_ids: ["u-hi", "u-tpl"] },
        { id: "products", title: "Products", utterance_ids: ["u-offer"] },
        { id: "closing", title: "Closing", utterance_ids: ["u-bye"] },
      ],
      utterances: {
        "u-hi": { id: "u-hi", text: "Hello, how can I help?", language: "en", tags: [] },
        "u-tpl": { id: "u-tpl", text: "Your balance is {amount} euro.", language: "en", tags: [] },
        "u-offer": { id: "u-offer", text: "We have a prepaid offer.", language: "en", tags: [] },
        "u-bye": { id: "u-bye", text: "Goodbye!", language: "en", tags: [] },
      },
      frequently_used: ["u-bye"],
      domain_records: [
        { id: "r1", attributes: { type: "prepaid", price: 10 } },
        { id: "r2", attributes: { type: "landline", price: 25 } },
      ],
      filters: [{ attribute: "type", allowed_values: [] }],
    },
    tasks: [{ kind: "Correct", span: ["ASR"] }],
    history: [
      { seq: 2, direction: "in", source: "participant", text: "[speech:clip-1]",
        audio_asset: null, delivered: null },
      { seq: 3, direction: "in", source: "ASR", text: "book a flight",
        audio_asset: null, delivered: null },
      { seq: 6, direction: "out", source: "system", text: "Where to?",
        audio_asset: null, delivered: "Displayed" },
    ],
    pending: null,
    notes: [{ seq: 7, ts: 1700000000500, actor: "wizard", text: "customer hesitated" }],
    errors: [],
    current_filters: {},
    active_stage: "greeting",
  },
};

export const NBEST_SHOWN: Message = {
  type: "WizardShown",
  session_id: "sess-fixture",
  seq: 9,
  ts: 1700000002000,
  actor: "system",
  payload: {
    origin_seq: 8,
    task_index: 0,
    task: { kind: "Correct", span: ["ASR"] },
    candidates: ["book a flight", "cook a fight"],
    editable_text: null,
    input_text: "clip-2",
  },
};

export const CORRECTION_SHOWN: Message = {
  type: "WizardShown",
  session_id: "sess-fixture",
  seq: 9,
  ts: 1700000002000,
  actor: "system",
  payload: {
    origin_seq: 8,
    task_index: 0,
    task: { kind: "Correct", span: ["ASR"] },
    candidates: null,
    editable_text: "cook a fight",
    input_text: "clip-2",
  },
};

// server event sequence for the history-order invariant, mirroring a
// replayed log: input -> component output -> wizard action -> system output
export const EVENT_SEQUENCE: Message[] = [
  { type: "ParticipantInput", session_id: "sess-fixture", seq: 10, ts: 1, actor: "participant",
    payload: { kind: "text", text: "hello?" } },
  { type: "ComponentOutput", session_id: "sess-fixture", seq: 11, ts: 2, actor: "component:InputMT",
    payload: { slot: "InputMT", text: "hallo?", origin_seq: 10 } },
  { type: "WizardShown", session_id: "sess-fixture", seq: 12, ts: 3, actor: "system",
    payload: { origin_seq: 10, task_index: 0, task: { kind: "Simulate", span: ["DM"] },
               candidates: null, editable_text: null, input_text: "hallo?" } },
  { type: "WizardAction", session_id: "sess-fixture", seq: 13, ts: 4, actor: "wizard",
    payload: { kind: "SelectUtterance", utterance_id: "u-hi", origin_seq: 10,
               resolves_pending: true, resolved_text: "Hello, how can I help?" } },
  { type: "SystemOutput", session_id: "sess-fixture", seq: 14, ts: 5, actor: "system",
    payload: { origin_seq: 10, action_seq: 13, text: "Hello, how can I help?",
               audio_asset: null, language: "en" } },
  { type: "DeliveryAck", session_id: "sess-fixture", seq: 15, ts: 6, actor: "participant",
    payload: { output_seq: 14, kind: "Displayed" } },
];

export const PARTICIPANT_SYNC: Message = {
  type: "state_sync",
  session_id: "sess-fixture",
  ts: 1700000001000,
  payload: {
    session_id: "sess-fixture",
    state: "Running",
    outputs: [
      { seq: 6, text: "Where to?", audio_asset: null },
    ],
    busy: false,
  },
};

export const PARTICIPANT_TEXT_OUTPUT: Message = {
  type: "SystemOutput", session_id: "sess-fixture", seq: 14, ts: 5,
  payload: { text: "Hello, how can I help?", audio_asset: null, language: "en" },
};

export const PARTICIPANT_AUDIO_OUTPUT: Message = {
  type: "SystemOutput", session_id: "sess-fixture", seq: 21, ts: 9,
  payload: { text: "Hallo!", audio_asset: "prerec-greet-de", language: "de" },
};

export const PARTICIPANT_BUSY: Message = {
  type: "busy", session_id: "sess-fixture", ts: 7,
  payload: { message: "the system is still replying" },
};

export const PARTICIPANT_END: Message = {
  type: "SessionEnd", session_id: "sess-fixture", seq: 30, ts: 11,
  payload: { reason: "wizard" },
};

export const ALL_PARTICIPANT_FIXTURES: Message[] = [
  { type: "hello", session_id: "sess-fixture", ts: 0, role: "participant",
    payload: { state: "Created", role: "participant" } },
  PARTICIPANT_SYNC,
  PARTICIPANT_TEXT_OUTPUT,
  PARTICIPANT_AUDIO_OUTPUT,
  PARTICIPANT_BUSY,
  { type: "protocol_error", session_id: "sess-fixture", ts: 8,
    payload: { message: "schema violation: nope" } },
  PARTICIPANT_END,
];

/** Scripted transport: records what the client sends, lets tests inject
 * server frames, and can simulate a drop. */
export class StubTransport implements ChannelTransport {
  sent: Message[] = [];
  closed = false;
  private messageHandler: ((text: string) => void) | null = null;
  private closeHandler: (() => void) | null = null;

  send(text: string): void {
    this.sent.push(JSON.parse(text) as Message);
  }

  close(): void {
    this.closed = true;
  }

  onMessage(handler: (text: string) => void): void {
    this.messageHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  inject(message: Message): void {
    this.messageHandler?.(JSON.stringify(message));
  }

  drop(): void {
    this.closeHandler?.();
  }
}
