// Wizard console view model. All state flows from server messages; user
// gestures only ever produce outbound messages (plus a transient optimistic
// highlight that the next server message or a rejection clears).

import { Message } from "../protocol.js";
import { templateSlots } from "../template.js";

export interface UtteranceView {
  id: string;
  text: string;
  language: string;
  slots: string[];
  tags: string[];
}

export interface StageView {
  id: string;
  title: string;
  utterances: UtteranceView[];
}

export interface HistoryEntryView {
  seq: number;
  direction: "in" | "out";
  source: string;
  text: string | null;
  audioAsset: string | null;
  delivered: string | null;
}

export interface PendingViewItem {
  originSeq: number | null;
  task: { kind: string; span: string[] };
  candidates: string[] | null;
  editableText: string | null;
  inputText: string | null;
}

export interface FilterControl {
  attribute: string;
  selected: string[];
}

export interface DomainRecordView {
  id: string;
  attributes: Record<string, string | number>;
}

export interface WizardViewState {
  sessionId: string | null;
  sessionState: string;
  stages: StageView[];
  frequentlyUsed: UtteranceView[];
  activeStageId: string | null;
  history: HistoryEntryView[];
  pending: PendingViewItem | null;
  chatEnabled: boolean;
  notes: { ts: number | null; text: string }[];
  instructions: string;
  domainRecords: DomainRecordView[];
  filters: FilterControl[];
  participantReady: boolean;
  errors: string[];
  toast: string | null;
  correctionDraft: string | null;
  bindingForm: { utteranceId: string; slots: string[]; values: Record<string, string> } | null;
  optimisticSeq: number | null; // highlight of the just-clicked utterance
}

export function emptyWizardView(): WizardViewState {
  return {
    sessionId: null,
    sessionState: "Created",
    stages: [],
    frequentlyUsed: [],
    activeStageId: null,
    history: [],
    pending: null,
    chatEnabled: false,
    notes: [],
    instructions: "",
    domainRecords: [],
    filters: [],
    participantReady: false,
    errors: [],
    toast: null,
    correctionDraft: null,
    bindingForm: null,
    optimisticSeq: null,
  };
}

function toUtteranceView(raw: any): UtteranceView {
  return {
    id: raw.id,
    text: raw.text,
    language: raw.language,
    slots: templateSlots(raw.text),
    tags: raw.tags ?? [],
  };
}

function hydrateExperiment(view: WizardViewState, experiment: any): void {
  const utterances: Record<string, any> = experiment.utterances ?? {};
  view.stages = (experiment.stages ?? []).map((stage: any) => ({
    id: stage.id,
    title: stage.title,
    utterances: (stage.utterance_ids ?? [])
      .map((id: string) => utterances[id])
      .filter(Boolean)
      .map(toUtteranceView),
  }));
  view.frequentlyUsed = (experiment.frequently_used ?? [])
    .map((id: string) => utterances[id])
    .filter(Boolean)
    .map(toUtteranceView);
  view.chatEnabled = Boolean(experiment.chat_enabled);
  view.domainRecords = experiment.domain_records ?? [];
  view.filters = (experiment.filters ?? []).map((f: any) => ({
    attribute: f.attribute,
    selected: [],
  }));
  if (!view.activeStageId && view.stages.length > 0) {
    view.activeStageId = view.stages[0].id;
  }
}

function historyFromServer(raw: any): HistoryEntryView {
  return {
    seq: raw.seq,
    direction: raw.direction,
    source: raw.source,
    text: raw.text ?? null,
    audioAsset: raw.audio_asset ?? null,
    delivered: raw.delivered ?? null,
  };
}

function pendingFromServer(raw: any): PendingViewItem | null {
  if (!raw) return null;
  return {
    originSeq: raw.origin_seq ?? null,
    task: raw.task,
    candidates: raw.candidates ?? null,
    editableText: raw.editable_text ?? null,
    inputText: raw.input_text ?? null,
  };
}

const HISTORY_EVENTS = new Set(["ParticipantInput", "ComponentOutput", "SystemOutput"]);

/** Apply one inbound server message; returns the same (mutated) view. */
export function applyServerMessage(view: WizardViewState, message: Message): WizardViewState {
  const payload: any = message.payload ?? {};
  switch (message.type) {
    case "hello":
      view.sessionId = message.session_id ?? view.sessionId;
      view.sessionState = payload.state ?? view.sessionState;
      break;
    case "state_sync": {
      view.sessionId = payload.session_id ?? view.sessionId;
      view.sessionState = payload.state ?? view.sessionState;
      hydrateExperiment(view, payload.experiment ?? {});
      view.instructions = taskInstructions(payload.tasks ?? [], payload.experiment?.name);
      view.history = (payload.history ?? []).map(historyFromServer);
      view.pending = pendingFromServer(payload.pending);
      view.notes = (payload.notes ?? []).map((n: any) => ({ ts: n.ts ?? null, text: n.text }));
      view.errors = (payload.errors ?? []).map((e: any) => e.message);
      for (const [attribute, values] of Object.entries(payload.current_filters ?? {})) {
        setFilterSelection(view, attribute, values as string[]);
      }
      if (payload.active_stage) view.activeStageId = payload.active_stage;
      view.participantReady = view.sessionState !== "Created";
      view.correctionDraft = view.pending?.editableText ?? null;
      view.optimisticSeq = null;
      break;
    }
    case "ParticipantReady":
      view.sessionState = "ParticipantReady";
      view.participantReady = true;
      view.toast = "participant is ready";
      break;
    case "WizardShown":
      view.pending = pendingFromServer(payload);
      view.correctionDraft = view.pending?.editableText ?? null;
      break;
    case "WizardAction":
      if (payload.resolves_pending) {
        view.pending = null;
        view.correctionDraft = null;
      }
      view.optimisticSeq = null;
      break;
    case "SystemOutput":
      view.sessionState = "Running";
      break;
    case "DeliveryAck": {
      const entry = view.history.find((h) => h.seq === payload.output_seq);
      if (entry) entry.delivered = payload.kind;
      break;
    }
    case "Note":
      view.notes.push({ ts: message.ts ?? null, text: payload.text });
      break;
    case "FilterChange":
      setFilterSelection(view, payload.attribute, payload.allowed_values ?? []);
      break;
    case "StageSwitch":
      view.activeStageId = payload.stage_id;
      break;
    case "Error":
      view.errors.push(payload.message);
      view.toast = payload.message;
      break;
    case "SessionEnd":
      view.sessionState = "Ended";
      break;
    case "busy":
    case "protocol_error":
      view.toast = payload.message ?? message.type;
      view.optimisticSeq = null; // revert the optimistic highlight
      break;
  }
  if (HISTORY_EVENTS.has(message.type) && message.seq !== undefined) {
    view.history.push(historyEntryFromEvent(message));
  }
  return view;
}

function historyEntryFromEvent(message: Message): HistoryEntryView {
  const payload: any = message.payload ?? {};
  if (message.type === "ParticipantInput") {
    const text = payload.kind === "text" ? payload.text
      : payload.kind === "speech" ? `[speech:${payload.asset_id}]` : "[speech]";
    return { seq: message.seq!, direction: "in", source: "participant",
             text, audioAsset: null, delivered: null };
  }
  if (message.type === "ComponentOutput") {
    const inputSide = ["TextIn", "ASR", "InputMT"].includes(payload.slot);
    return { seq: message.seq!, direction: inputSide ? "in" : "out",
             source: payload.slot, text: payload.text ?? null,
             audioAsset: payload.audio_asset ?? null, delivered: null };
  }
  return { seq: message.seq!, direction: "out", source: "system",
           text: payload.text ?? null, audioAsset: payload.audio_asset ?? null,
           delivered: null };
}

function setFilterSelection(view: WizardViewState, attribute: string, values: string[]): void {
  const control = view.filters.find((f) => f.attribute === attribute);
  if (control) control.selected = values.map(String);
  else view.filters.push({ attribute, selected: values.map(String) });
}

function taskInstructions(tasks: any[], experimentName?: string): string {
  if (!tasks.length) return `${experimentName ?? "session"}: all components run automatically`;
  const parts = tasks.map((t) => `${t.kind} ${t.span.join("+")}`);
  return `${experimentName ?? "session"} — your tasks: ${parts.join(", ")}`;
}

// -- gestures ---------------------------------------------------------------
// Each returns the outbound Message (or null when the gesture only changes
// local UI state, e.g. opening the binding mini-form).

export class IllegalGesture extends Error {}

export function clickUtterance(view: WizardViewState, utteranceId: string): Message | null {
  const utterance = findUtterance(view, utteranceId);
  if (!utterance) throw new IllegalGesture(`unknown utterance ${utteranceId}`);
  if (view.pending && view.pending.task.kind !== "Simulate") {
    throw new IllegalGesture("selection is disabled while correcting component output");
  }
  if (utterance.slots.length > 0) {
    view.bindingForm = { utteranceId, slots: utterance.slots, values: {} };
    return null; // fill the mini-form first
  }
  view.optimisticSeq = view.history.length;
  return { type: "WizardAction",
           payload: { kind: "SelectUtterance", utterance_id: utteranceId } };
}

export function setBinding(view: WizardViewState, slot: string, value: string): void {
  if (!view.bindingForm) throw new IllegalGesture("no binding form open");
  view.bindingForm.values[slot] = value;
}

export function submitBindingForm(view: WizardViewState): Message {
  const form = view.bindingForm;
  if (!form) throw new IllegalGesture("no binding form open");
  const missing = form.slots.filter((s) => !(s in form.values));
  if (missing.length > 0) {
    throw new IllegalGesture(`missing bindings: ${missing.join(", ")}`);
  }
  view.bindingForm = null;
  view.optimisticSeq = view.history.length;
  return { type: "WizardAction",
           payload: { kind: "SelectUtterance", utterance_id: form.utteranceId,
                      bindings: form.values } };
}

export function sendChat(view: WizardViewState, text: string): Message {
  if (!view.chatEnabled) {
    throw new IllegalGesture("free-text chat is disabled for this experiment");
  }
  if (!text.trim()) throw new IllegalGesture("empty chat text");
  return { type: "WizardAction", payload: { kind: "FreeText", text } };
}

export function pickCandidate(view: WizardViewState, index: number): Message {
  const candidates = view.pending?.candidates;
  if (!candidates) throw new IllegalGesture("no candidate list pending");
  if (index < 0 || index >= candidates.length) {
    throw new IllegalGesture(`candidate ${index + 1} does not exist`);
  }
  return { type: "WizardAction", payload: { kind: "PickCandidate", index } };
}

export function editCorrection(view: WizardViewState, text: string): void {
  if (view.pending?.editableText === null || view.pending === null) {
    throw new IllegalGesture("nothing to correct");
  }
  view.correctionDraft = text;
}

export function sendCorrection(view: WizardViewState): Message {
  if (view.pending?.editableText === null || view.pending === null) {
    throw new IllegalGesture("nothing to correct");
  }
  const text = view.correctionDraft ?? "";
  if (text === view.pending.editableText) {
    return { type: "WizardAction", payload: { kind: "Approve" } };
  }
  return { type: "WizardAction", payload: { kind: "SubmitCorrection", text } };
}

export function approveOutput(view: WizardViewState): Message {
  if (view.pending?.editableText === null || view.pending === null) {
    throw new IllegalGesture("nothing to approve");
  }
  return { type: "WizardAction", payload: { kind: "Approve" } };
}

export function addNote(view: WizardViewState, text: string): Message {
  if (!text.trim()) throw new IllegalGesture("empty note");
  return { type: "Note", payload: { text } };
}

export function switchStage(view: WizardViewState, stageId: string): Message {
  if (!view.stages.some((s) => s.id === stageId)) {
    throw new IllegalGesture(`unknown stage ${stageId}`);
  }
  view.activeStageId = stageId; // optimistic: the echo confirms it
  return { type: "StageSwitch", payload: { stage_id: stageId } };
}

export function cycleStage(view: WizardViewState): Message | null {
  if (view.stages.length < 2 || !view.activeStageId) return null;
  const index = view.stages.findIndex((s) => s.id === view.activeStageId);
  return switchStage(view, view.stages[(index + 1) % view.stages.length].id);
}

export function changeFilter(view: WizardViewState, attribute: string,
                             values: string[]): Message {
  setFilterSelection(view, attribute, values);
  return { type: "FilterChange", payload: { attribute, allowed_values: values } };
}

export function endSession(): Message {
  return { type: "SessionEnd", payload: { reason: "wizard" } };
}

/** The keyboard-first shortcuts: digits pick N-best candidates, Tab cycles
 * the stage tabs. Returns the message a key produced, if any. */
export function handleKey(view: WizardViewState, key: string): Message | null {
  if (/^[1-9]$/.test(key) && view.pending?.candidates) {
    const index = Number(key) - 1;
    if (index >= view.pending.candidates.length) return null; // ignore dead keys
    return pickCandidate(view, index);
  }
  if (key === "Tab") return cycleStage(view);
  return null;
}

export function visibleUtterances(view: WizardViewState): UtteranceView[] {
  const active = view.stages.find((s) => s.id === view.activeStageId);
  const inStage = active ? active.utterances : [];
  const stageIds = new Set(inStage.map((u) => u.id));
  return [...inStage, ...view.frequentlyUsed.filter((u) => !stageIds.has(u.id))];
}

export function filteredRecords(view: WizardViewState): DomainRecordView[] {
  const active = view.filters.filter((f) => f.selected.length > 0);
  return view.domainRecords.filter((record) =>
    active.every((f) => f.attribute in record.attributes
      && f.selected.includes(String(record.attributes[f.attribute]))));
}

function findUtterance(view: WizardViewState, id: string): UtteranceView | undefined {
  for (const stage of view.stages) {
    const hit = stage.utterances.find((u) => u.id === id);
    if (hit) return hit;
  }
  return view.frequentlyUsed.find((u) => u.id === id);
}

/** Drag-and-drop arrangement is authoring, not live operation: the gesture
 * maps to a REST move call on the experiment document, no UI-private state. */
export function moveUtteranceRequest(experimentId: string, utteranceId: string,
                                     targetStageId: string, position: number) {
  return {
    method: "PUT" as const,
    path: `/experiments/${experimentId}`,
    note: "apply move_utterance on the fetched document, then PUT with its revision",
    move: { utterance_id: utteranceId, target_stage_id: targetStageId, position },
  };
}
