// HTML rendering for the wizard console. Pure string builders over the view
// model so the whole surface is testable without a DOM; browser.ts mounts
// the result and wires events by delegation.

import {
  HistoryEntryView,
  WizardViewState,
  filteredRecords,
  visibleUtterances,
} from "./state.js";

export function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderStageTabs(view: WizardViewState): string {
  const tabs = view.stages.map((stage) => {
    const active = stage.id === view.activeStageId ? " active" : "";
    return `<button class="tab${active}" data-stage="${escapeHtml(stage.id)}">` +
      `${escapeHtml(stage.title)}</button>`;
  });
  return `<nav class="stage-tabs">${tabs.join("")}</nav>`;
}

export function renderUtterancePanel(view: WizardViewState): string {
  const active = view.stages.find((s) => s.id === view.activeStageId);
  const items = (active?.utterances ?? []).map(renderUtteranceButton).join("");
  const frequent = view.frequentlyUsed.map(renderUtteranceButton).join("");
  return `<section class="utterances">
  <div class="stage-utterances">${items}</div>
  <aside class="frequently-used"><h3>Frequently used</h3>${frequent}</aside>
</section>`;
}

function renderUtteranceButton(u: { id: string; text: string; slots: string[] }): string {
  const slotMark = u.slots.length > 0 ? ` has-slots" title="fill: ${escapeHtml(u.slots.join(", "))}` : "";
  return `<button class="utterance${slotMark}" data-utterance="${escapeHtml(u.id)}">` +
    `${escapeHtml(u.text)}</button>`;
}

// Outgoing entries carry a left arrow, incoming a right arrow; the newest
// entry is highlighted and delivery status is badged on outgoing ones.
export function renderHistory(view: WizardViewState): string {
  const last = view.history.length - 1;
  const rows = view.history.map((entry, i) => renderHistoryEntry(entry, i === last));
  return `<ol class="history">${rows.join("")}</ol>`;
}

function renderHistoryEntry(entry: HistoryEntryView, latest: boolean): string {
  const arrow = entry.direction === "out" ? "&#8592;" : "&#8594;";
  const classes = ["entry", entry.direction];
  if (latest) classes.push("latest");
  const delivered = entry.delivered
    ? ` <span class="delivered">${escapeHtml(entry.delivered)}</span>` : "";
  const body = entry.text !== null ? escapeHtml(entry.text)
    : entry.audioAsset ? `[audio ${escapeHtml(entry.audioAsset)}]` : "";
  return `<li class="${classes.join(" ")}" data-seq="${entry.seq}">` +
    `<span class="arrow">${arrow}</span> ${body}` +
    ` <span class="source">${escapeHtml(entry.source)}</span>${delivered}</li>`;
}

export function renderPendingPanel(view: WizardViewState): string {
  const pending = view.pending;
  if (!pending) return `<section class="pending empty">No turn waiting.</section>`;
  const task = `${pending.task.kind} ${pending.task.span.join("+")}`;
  let body: string;
  if (pending.candidates) {
    const items = pending.candidates.map((c, i) =>
      `<li><button class="candidate" data-index="${i}">` +
      `<kbd>${i + 1}</kbd> ${escapeHtml(c)}</button></li>`).join("");
    body = `<ol class="nbest">${items}</ol>`;
  } else if (pending.editableText !== null) {
    body = `<textarea class="correction">${escapeHtml(view.correctionDraft ?? pending.editableText)}</textarea>
  <button class="send-correction">Send</button><button class="approve">Approve as-is</button>`;
  } else {
    body = `<p class="prompt">Respond to: <b>${escapeHtml(pending.inputText ?? "")}</b></p>`;
  }
  return `<section class="pending"><h3>${escapeHtml(task)}</h3>${body}</section>`;
}

export function renderChatBox(view: WizardViewState): string {
  if (!view.chatEnabled) return ""; // control absent when chat is off
  return `<form class="chat-box"><input name="chat" placeholder="free text...">` +
    `<button type="submit">Send</button></form>`;
}

export function renderBindingForm(view: WizardViewState): string {
  if (!view.bindingForm) return "";
  const fields = view.bindingForm.slots.map((slot) =>
    `<label>${escapeHtml(slot)} <input name="slot-${escapeHtml(slot)}" data-slot="${escapeHtml(slot)}"></label>`);
  return `<form class="binding-form" data-utterance="${escapeHtml(view.bindingForm.utteranceId)}">` +
    `${fields.join("")}<button type="submit">Send</button></form>`;
}

export function renderNotesPanel(view: WizardViewState): string {
  const items = view.notes.map((n) => `<li>${escapeHtml(n.text)}</li>`).join("");
  return `<section class="notes"><h3>Notes</h3><ol>${items}</ol>` +
    `<form class="note-form"><input name="note" placeholder="time-stamped note...">` +
    `<button type="submit">Add</button></form></section>`;
}

export function renderDomainPanel(view: WizardViewState): string {
  if (view.domainRecords.length === 0) return "";
  const controls = view.filters.map((f) =>
    `<label>${escapeHtml(f.attribute)} <input class="filter" data-attribute="${escapeHtml(f.attribute)}"` +
    ` value="${escapeHtml(f.selected.join(","))}"></label>`).join("");
  const rows = filteredRecords(view).map((r) =>
    `<li>${escapeHtml(JSON.stringify(r.attributes))}</li>`).join("");
  return `<section class="domain"><h3>Domain data</h3>${controls}<ul>${rows}</ul></section>`;
}

export function renderBanner(view: WizardViewState): string {
  const ready = view.participantReady
    ? `<span class="ready-note">participant ready</span>` : "";
  const toast = view.toast ? `<span class="toast">${escapeHtml(view.toast)}</span>` : "";
  return `<header class="banner"><span class="instructions">` +
    `${escapeHtml(view.instructions)}</span>${ready}${toast}</header>`;
}

export function renderWizardConsole(view: WizardViewState): string {
  return [
    renderBanner(view),
    renderStageTabs(view),
    renderUtterancePanel(view),
    renderBindingForm(view),
    renderPendingPanel(view),
    renderChatBox(view),
    renderHistory(view),
    renderDomainPanel(view),
    renderNotesPanel(view),
    `<footer><button class="end-session">End session</button></footer>`,
  ].join("\n");
}

export function visibleUtteranceIds(view: WizardViewState): string[] {
  return visibleUtterances(view).map((u) => u.id);
}
