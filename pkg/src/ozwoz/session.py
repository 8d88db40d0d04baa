"""Live-session runtime and the append-only event log.

A session routes participant input through BlackBox components and wizard
tasks to participant output.  Every change is recorded as a sequence-numbered
SessionEvent; state is mutated exclusively by the event applier, so replaying
a log reconstructs exactly the live state at every prefix (the digest check
relies on this).  Adapter calls and the clock live in the command layer and
leave their outcomes in event payloads; the applier never touches either.

Concurrency: one lock per session serializes all commands (the per-session
event queue); distinct sessions are fully independent.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .adapters import AdapterRegistry, ComponentRequest, DegradationProfile, degrade_text, lookup_prepared
from .errors import (
    AdapterError,
    CorruptLog,
    IllegalAction,
    InvalidConfig,
    NotFound,
    TurnInFlight,
    ValidationError,
)
from .model import Experiment, canonical_json, now_ms, render_template
from .pipeline import (
    ComponentMode,
    ComponentSlot,
    PipelineConfig,
    SlotKind,
    TaskKind,
    WizardTask,
    derive_wizard_tasks,
    validate,
)


class SessionState(str, Enum):
    CREATED = "Created"
    PARTICIPANT_READY = "ParticipantReady"
    RUNNING = "Running"
    ENDED = "Ended"


class EventType(str, Enum):
    SESSION_START = "SessionStart"
    PARTICIPANT_READY = "ParticipantReady"
    PARTICIPANT_INPUT = "ParticipantInput"
    COMPONENT_OUTPUT = "ComponentOutput"
    WIZARD_SHOWN = "WizardShown"
    WIZARD_ACTION = "WizardAction"
    SYSTEM_OUTPUT = "SystemOutput"
    DELIVERY_ACK = "DeliveryAck"
    NOTE = "Note"
    FILTER_CHANGE = "FilterChange"
    STAGE_SWITCH = "StageSwitch"
    ERROR = "Error"
    SESSION_END = "SessionEnd"


ACTOR_PARTICIPANT = "participant"
ACTOR_WIZARD = "wizard"
ACTOR_SYSTEM = "system"


def component_actor(kind: SlotKind) -> str:
    return f"component:{kind.value}"


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    ts: int
    actor: str
    type: EventType
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "actor": self.actor,
            "type": self.type.value,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionEvent":
        try:
            return cls(
                seq=int(d["seq"]),
                ts=int(d["ts"]),
                actor=str(d["actor"]),
                type=EventType(d["type"]),
                payload=dict(d.get("payload", {})),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptLog(int(d.get("seq", -1)) if isinstance(d, dict) else -1,
                             f"bad event record: {exc}") from exc


@dataclass
class PendingItem:
    origin_seq: Optional[int]
    task_index: int
    task: WizardTask
    candidates: Optional[list[str]] = None
    editable_text: Optional[str] = None
    input_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "origin_seq": self.origin_seq,
            "task_index": self.task_index,
            "task": self.task.to_dict(),
            "candidates": self.candidates,
            "editable_text": self.editable_text,
            "input_text": self.input_text,
        }


@dataclass
class HistoryEntry:
    seq: int
    direction: str  # "in" (from participant side) | "out" (toward participant)
    source: str  # "participant", "system", or a slot kind
    text: Optional[str]
    audio_asset: Optional[str] = None
    delivered: Optional[str] = None  # Displayed | PlaybackFinished

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "direction": self.direction,
            "source": self.source,
            "text": self.text,
            "audio_asset": self.audio_asset,
            "delivered": self.delivered,
        }


# wizard action kinds
SELECT_UTTERANCE = "SelectUtterance"
FREE_TEXT = "FreeText"
PICK_CANDIDATE = "PickCandidate"
SUBMIT_CORRECTION = "SubmitCorrection"
APPROVE = "Approve"

_WIZARD_ACTION_KINDS = {SELECT_UTTERANCE, FREE_TEXT, PICK_CANDIDATE, SUBMIT_CORRECTION, APPROVE}

_INPUT_SIDE = (SlotKind.TEXT_IN, SlotKind.ASR, SlotKind.INPUT_MT)


@dataclass
class Session:
    """Replayable session state.  Mutated only by apply_event."""

    id: str
    experiment: Experiment
    config: PipelineConfig
    tasks: list[WizardTask]
    state: SessionState = SessionState.CREATED
    events: list[SessionEvent] = field(default_factory=list)
    history: list[HistoryEntry] = field(default_factory=list)
    pending: Optional[PendingItem] = None
    notes: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    current_filters: dict[str, list] = field(default_factory=dict)
    active_stage: Optional[str] = None

    @property
    def next_seq(self) -> int:
        return len(self.events)

    @property
    def last_ts(self) -> int:
        return self.events[-1].ts if self.events else 0

    def system_output(self, seq: int) -> SessionEvent:
        for ev in self.events:
            if ev.seq == seq and ev.type is EventType.SYSTEM_OUTPUT:
                return ev
        raise NotFound(f"no SystemOutput with seq {seq}")


def session_digest(session: Session) -> str:
    """Stable 64-bit content digest over (state, history, pending)."""
    doc = {
        "state": session.state.value,
        "history": [h.to_dict() for h in session.history],
        "pending": session.pending.to_dict() if session.pending else None,
    }
    data = canonical_json(doc).encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:16]


_REQUIRED_PAYLOAD_FIELDS: dict[EventType, tuple[str, ...]] = {
    EventType.SESSION_START: ("session_id", "experiment", "tasks"),
    EventType.PARTICIPANT_READY: (),
    EventType.PARTICIPANT_INPUT: ("kind",),
    EventType.COMPONENT_OUTPUT: ("slot",),
    EventType.WIZARD_SHOWN: ("task_index", "task"),
    EventType.WIZARD_ACTION: ("kind", "resolves_pending"),
    EventType.SYSTEM_OUTPUT: ("text",),
    EventType.DELIVERY_ACK: ("output_seq", "kind"),
    EventType.NOTE: ("text",),
    EventType.FILTER_CHANGE: ("attribute", "allowed_values"),
    EventType.STAGE_SWITCH: ("stage_id",),
    EventType.ERROR: ("message",),
    EventType.SESSION_END: (),
}


def apply_event(session: Session, event: SessionEvent) -> None:
    """The single state-transition function; raises CorruptLog on violations."""
    if event.seq != session.next_seq:
        raise CorruptLog(event.seq, f"expected seq {session.next_seq}")
    if event.ts < session.last_ts:
        raise CorruptLog(event.seq, "timestamps must be non-decreasing")
    for fieldname in _REQUIRED_PAYLOAD_FIELDS[event.type]:
        if fieldname not in event.payload:
            raise CorruptLog(event.seq, f"{event.type.value} payload missing {fieldname!r}")
    if session.state is SessionState.ENDED:
        raise CorruptLog(event.seq, "event after SessionEnd")

    p = event.payload
    etype = event.type
    if etype is EventType.SESSION_START:
        if event.seq != 0:
            raise CorruptLog(event.seq, "SessionStart only at seq 0")
    elif etype is EventType.PARTICIPANT_READY:
        if session.state is not SessionState.CREATED:
            raise CorruptLog(event.seq, f"ParticipantReady in state {session.state.value}")
        session.state = SessionState.PARTICIPANT_READY
    elif etype is EventType.PARTICIPANT_INPUT:
        if session.state not in (SessionState.PARTICIPANT_READY, SessionState.RUNNING):
            raise CorruptLog(event.seq, f"ParticipantInput in state {session.state.value}")
        if session.pending is not None:
            raise CorruptLog(event.seq, "ParticipantInput while a turn is in flight")
        session.state = SessionState.RUNNING
        session.history.append(HistoryEntry(
            seq=event.seq, direction="in", source="participant",
            text=p.get("text") if p.get("kind") == "text" else _speech_label(p)))
    elif etype is EventType.COMPONENT_OUTPUT:
        kind = SlotKind(p["slot"])
        direction = "in" if kind in _INPUT_SIDE else "out"
        session.history.append(HistoryEntry(
            seq=event.seq, direction=direction, source=kind.value,
            text=p.get("text"), audio_asset=p.get("audio_asset")))
    elif etype is EventType.WIZARD_SHOWN:
        if session.pending is not None:
            raise CorruptLog(event.seq, "WizardShown while another item is pending")
        session.pending = PendingItem(
            origin_seq=p.get("origin_seq"),
            task_index=int(p["task_index"]),
            task=WizardTask.from_dict(p["task"]),
            candidates=list(p["candidates"]) if p.get("candidates") is not None else None,
            editable_text=p.get("editable_text"),
            input_text=p.get("input_text"),
        )
    elif etype is EventType.WIZARD_ACTION:
        if p.get("kind") not in _WIZARD_ACTION_KINDS:
            raise CorruptLog(event.seq, f"unknown wizard action kind {p.get('kind')!r}")
        if p["resolves_pending"]:
            if session.pending is None:
                raise CorruptLog(event.seq, "action resolves a pending item that does not exist")
            session.pending = None
    elif etype is EventType.SYSTEM_OUTPUT:
        if session.state not in (SessionState.PARTICIPANT_READY, SessionState.RUNNING):
            raise CorruptLog(event.seq, f"SystemOutput in state {session.state.value}")
        session.state = SessionState.RUNNING
        session.history.append(HistoryEntry(
            seq=event.seq, direction="out", source="system",
            text=p["text"], audio_asset=p.get("audio_asset")))
    elif etype is EventType.DELIVERY_ACK:
        if p["kind"] not in ("Displayed", "PlaybackFinished"):
            raise CorruptLog(event.seq, f"bad ack kind {p['kind']!r}")
        for entry in session.history:
            if entry.seq == p["output_seq"] and entry.source == "system":
                entry.delivered = p["kind"]
                break
        else:
            raise CorruptLog(event.seq, f"ack for unknown output seq {p['output_seq']}")
    elif etype is EventType.NOTE:
        session.notes.append({"seq": event.seq, "ts": event.ts, "actor": event.actor,
                              "text": p["text"]})
    elif etype is EventType.FILTER_CHANGE:
        session.current_filters[p["attribute"]] = list(p["allowed_values"])
    elif etype is EventType.STAGE_SWITCH:
        session.active_stage = p["stage_id"]
    elif etype is EventType.ERROR:
        session.errors.append({"seq": event.seq, "actor": event.actor, **p})
    elif etype is EventType.SESSION_END:
        session.state = SessionState.ENDED
    session.events.append(event)


def _speech_label(payload: dict) -> str:
    if payload.get("kind") == "speech":
        return f"[speech:{payload.get('asset_id', '?')}]"
    return "[speech]"


def replay(events: Iterable[SessionEvent | dict],
           experiment: Optional[Experiment] = None) -> Session:
    """Rebuild session state from a log; raises CorruptLog on any violation.

    The SessionStart payload embeds the experiment snapshot, so logs are
    self-contained; pass experiment only to override it.
    """
    session: Optional[Session] = None
    for raw in events:
        event = raw if isinstance(raw, SessionEvent) else SessionEvent.from_dict(raw)
        if session is None:
            if event.type is not EventType.SESSION_START or event.seq != 0:
                raise CorruptLog(event.seq, "log must begin with SessionStart at seq 0")
            p = event.payload
            exp = experiment or Experiment.from_dict(p["experiment"])
            if exp.pipeline is None:
                raise CorruptLog(0, "snapshot has no pipeline")
            session = Session(
                id=p["session_id"],
                experiment=exp,
                config=exp.pipeline,
                tasks=[WizardTask.from_dict(t) for t in p["tasks"]],
            )
        apply_event(session, event)
    if session is None:
        raise CorruptLog(0, "empty log")
    return session


class EventLogWriter:
    """Newline-delimited JSON log, flushed and fsynced per event."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: SessionEvent) -> None:
        self._fh.write(canonical_json(event.to_dict()) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def read_log(path: str | Path) -> list[SessionEvent]:
    """Read an NDJSON event log, dropping a trailing half-written line."""
    events: list[SessionEvent] = []
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    complete = lines[:-1]  # data after the last newline is a torn write
    for line in complete:
        if not line.strip():
            continue
        try:
            events.append(SessionEvent.from_dict(json.loads(line.decode("utf-8"))))
        except (ValueError, UnicodeDecodeError):
            break  # torn or corrupt tail: keep the prefix
    return events


class SessionRuntime:
    """Command surface over one live session.

    All commands take the session lock, append events through apply_event and
    notify listeners in order.  Adapter invocations happen inside the command
    (bounded by their timeout), never inside the applier.
    """

    def __init__(self, session: Session, registry: Optional[AdapterRegistry] = None,
                 log: Optional[EventLogWriter] = None,
                 clock: Callable[[], int] = now_ms):
        self.session = session
        self.registry = registry or AdapterRegistry()
        self.log = log
        self.clock = clock
        self.lock = threading.RLock()
        self.listeners: list[Callable[[SessionEvent], None]] = []

    # -- event plumbing ----------------------------------------------------

    def on_event(self, listener: Callable[[SessionEvent], None]) -> None:
        self.listeners.append(listener)

    def _append(self, actor: str, etype: EventType, payload: dict) -> SessionEvent:
        event = SessionEvent(
            seq=self.session.next_seq,
            ts=max(self.clock(), self.session.last_ts),
            actor=actor,
            type=etype,
            payload=payload,
        )
        apply_event(self.session, event)
        if self.log is not None:
            self.log.append(event)
        for listener in self.listeners:
            listener(event)
        return event

    # -- commands ----------------------------------------------------------

    def participant_ready(self) -> bool:
        with self.lock:
            if self.session.state is not SessionState.CREATED:
                return False
            self._append(ACTOR_PARTICIPANT, EventType.PARTICIPANT_READY, {})
            return True

    def ingest_participant_input(self, payload: dict) -> None:
        with self.lock:
            if self.session.state not in (SessionState.PARTICIPANT_READY, SessionState.RUNNING):
                raise IllegalAction(f"cannot accept input in state {self.session.state.value}")
            if self.session.pending is not None:
                raise TurnInFlight("a previous turn is still awaiting the wizard")
            payload = self._check_input_payload(payload)
            event = self._append(ACTOR_PARTICIPANT, EventType.PARTICIPANT_INPUT, payload)
            if payload["kind"] == "text":
                carry = payload["text"]
            elif payload["kind"] == "speech":
                carry = payload["asset_id"]  # BlackBox ASR resolves the asset
            else:
                carry = "[speech]"  # marker only; audio travels out of band
            self._route(start=0, origin_seq=event.seq, action_seq=None,
                        text=carry, audio=None, skip=frozenset())

    def apply_wizard_action(self, action: dict) -> None:
        """action: {"kind": ..., plus kind-specific fields, optional bindings}."""
        with self.lock:
            kind = action.get("kind")
            if kind not in _WIZARD_ACTION_KINDS:
                raise IllegalAction(f"unknown wizard action kind {kind!r}")
            if self.session.state not in (SessionState.PARTICIPANT_READY, SessionState.RUNNING):
                raise IllegalAction(f"cannot act in state {self.session.state.value}")
            pending = self.session.pending
            if pending is None:
                if kind not in (SELECT_UTTERANCE, FREE_TEXT):
                    raise IllegalAction(f"{kind} requires a pending item")
                self._wizard_initiated(action)
            else:
                self._resolve_pending(pending, action)

    def acknowledge_delivery(self, output_seq: int, kind: str) -> None:
        with self.lock:
            if kind not in ("Displayed", "PlaybackFinished"):
                raise ValidationError(f"unknown delivery kind {kind!r}")
            self.session.system_output(output_seq)  # NotFound if absent
            self._append(ACTOR_PARTICIPANT, EventType.DELIVERY_ACK,
                         {"output_seq": output_seq, "kind": kind})

    def add_note(self, text: str, actor: str = ACTOR_WIZARD) -> None:
        with self.lock:
            if not text.strip():
                raise ValidationError("note text must be non-empty")
            self._append(actor, EventType.NOTE, {"text": text})

    def switch_stage(self, stage_id: str) -> None:
        with self.lock:
            self.session.experiment.stage(stage_id)  # NotFound if absent
            self._append(ACTOR_WIZARD, EventType.STAGE_SWITCH, {"stage_id": stage_id})

    def change_filter(self, attribute: str, allowed_values: list) -> None:
        with self.lock:
            self._append(ACTOR_WIZARD, EventType.FILTER_CHANGE,
                         {"attribute": attribute, "allowed_values": list(allowed_values)})

    def end_session(self, reason: str = "wizard") -> None:
        with self.lock:
            if self.session.state is SessionState.ENDED:
                return
            self._append(ACTOR_SYSTEM, EventType.SESSION_END, {"reason": reason})

    def report_error(self, message: str, actor: str = ACTOR_SYSTEM, **extra) -> None:
        with self.lock:
            self._append(actor, EventType.ERROR, {"message": message, **extra})

    # -- routing -----------------------------------------------------------

    def _active(self) -> list[ComponentSlot]:
        return self.session.config.active_slots()

    def _check_input_payload(self, payload: dict) -> dict:
        kind = payload.get("kind")
        speech_input = self.session.config.slot(SlotKind.ASR).active
        if speech_input:
            if kind not in ("speech", "speech_marker"):
                raise ValidationError("this session takes speech input")
            if kind == "speech" and not payload.get("asset_id"):
                raise ValidationError("speech input needs an asset_id")
            out = {"kind": kind}
            if kind == "speech":
                out["asset_id"] = payload["asset_id"]
            return out
        if kind != "text" or not str(payload.get("text", "")).strip():
            raise ValidationError("this session takes non-empty text input")
        return {"kind": "text", "text": str(payload["text"])}

    def _task_covering(self, kind: SlotKind) -> Optional[tuple[int, WizardTask]]:
        for i, task in enumerate(self.session.tasks):
            if kind in task.span:
                return i, task
        return None

    def _resume_index_after(self, task: WizardTask) -> int:
        active = self._active()
        last = task.span[-1]
        for i, slot in enumerate(active):
            if slot.kind is last:
                return i + 1
        return len(active)

    def _wizard_initiated(self, action: dict) -> None:
        # unprompted prompts enter the pipeline downstream of dialogue management
        active = self._active()
        dm_order = list(SlotKind).index(SlotKind.DM)
        start = len(active)
        for i, slot in enumerate(active):
            if list(SlotKind).index(slot.kind) > dm_order:
                start = i
                break
        resolved, prepared_audio, skip = self._resolve_action_text(action, origin_seq=None)
        payload = self._action_payload(action, origin_seq=None, resolves_pending=False,
                                       resolved_text=resolved, prepared_audio=prepared_audio)
        event = self._append(ACTOR_WIZARD, EventType.WIZARD_ACTION, payload)
        self._route(start=start, origin_seq=None, action_seq=event.seq,
                    text=resolved, audio=prepared_audio, skip=skip)

    def _resolve_pending(self, pending: PendingItem, action: dict) -> None:
        kind = action["kind"]
        task = pending.task
        if task.kind is TaskKind.SIMULATE:
            if kind not in (SELECT_UTTERANCE, FREE_TEXT):
                raise IllegalAction(f"{kind} is not legal for a Simulate task")
        else:  # Correct task: N-best pick, or edit/approve in correction mode
            if pending.candidates is not None:
                if kind != PICK_CANDIDATE:
                    raise IllegalAction(f"{kind} is not legal for an N-best correction")
            else:
                if kind not in (SUBMIT_CORRECTION, APPROVE):
                    raise IllegalAction(f"{kind} is not legal in correction mode")

        if kind == PICK_CANDIDATE:
            index = action.get("index")
            if not isinstance(index, int) or not 0 <= index < len(pending.candidates or []):
                raise IllegalAction(f"candidate index {index!r} out of range")
            resolved, prepared_audio, skip = pending.candidates[index], None, frozenset()
        elif kind == SUBMIT_CORRECTION:
            text = action.get("text", "")
            if not str(text).strip():
                raise IllegalAction("corrected text must be non-empty")
            resolved, prepared_audio, skip = str(text), None, frozenset()
        elif kind == APPROVE:
            resolved, prepared_audio, skip = pending.editable_text or "", None, frozenset()
        else:
            resolved, prepared_audio, skip = self._resolve_action_text(action, pending.origin_seq)

        payload = self._action_payload(action, origin_seq=pending.origin_seq,
                                       resolves_pending=True, resolved_text=resolved,
                                       prepared_audio=prepared_audio)
        event = self._append(ACTOR_WIZARD, EventType.WIZARD_ACTION, payload)
        self._route(start=self._resume_index_after(task), origin_seq=pending.origin_seq,
                    action_seq=event.seq, text=resolved, audio=prepared_audio, skip=skip)

    def _resolve_action_text(self, action: dict, origin_seq: Optional[int]
                             ) -> tuple[str, Optional[str], frozenset]:
        """Text for SelectUtterance/FreeText, honouring prepared translations/audio."""
        kind = action["kind"]
        if kind == FREE_TEXT:
            if not self.session.experiment.chat_enabled:
                raise IllegalAction("free-text input is disabled for this experiment")
            text = str(action.get("text", ""))
            if not text.strip():
                raise IllegalAction("free text must be non-empty")
            return text, None, frozenset()

        utt = self.session.experiment.utterance(action.get("utterance_id", ""))
        bindings = dict(action.get("bindings", {}))
        out_lang = self._output_language()
        skip: set[SlotKind] = set()
        prepared_audio = None
        template = utt.text
        if out_lang and out_lang != utt.language:
            prepared = lookup_prepared(utt, out_lang)
            if prepared is not None and prepared.text is not None:
                template = prepared.text
                skip.add(SlotKind.OUTPUT_MT)  # already in the output language
            if (prepared is not None and prepared.audio_asset is not None
                    and self.session.config.slot(SlotKind.TTS).active):
                prepared_audio = prepared.audio_asset
                skip.add(SlotKind.TTS)
        resolved = render_template(template, bindings)  # MissingBinding surfaces pre-log
        return resolved, prepared_audio, frozenset(skip)

    def _output_language(self) -> Optional[str]:
        config = self.session.config
        for kind in (SlotKind.TTS, SlotKind.TEXT_OUT):
            slot = config.slot(kind)
            if slot.active and slot.settings.get("language"):
                return slot.settings["language"]
        out_mt = config.slot(SlotKind.OUTPUT_MT)
        if out_mt.active:
            return out_mt.settings.get("target_language")
        return None

    def _action_payload(self, action: dict, origin_seq: Optional[int], resolves_pending: bool,
                        resolved_text: str, prepared_audio: Optional[str]) -> dict:
        payload = {
            "kind": action["kind"],
            "origin_seq": origin_seq,
            "resolves_pending": resolves_pending,
            "resolved_text": resolved_text,
        }
        if action.get("utterance_id"):
            payload["utterance_id"] = action["utterance_id"]
        if action.get("bindings"):
            payload["bindings"] = dict(action["bindings"])
        if action.get("index") is not None and action["kind"] == PICK_CANDIDATE:
            payload["index"] = action["index"]
        if prepared_audio:
            payload["prepared_audio"] = prepared_audio
        return payload

    def _route(self, start: int, origin_seq: Optional[int], action_seq: Optional[int],
               text: str, audio: Optional[str], skip: frozenset) -> None:
        """Walk active slots from `start`, invoking BlackBox components, until a
        wizard task takes over (pending created) or the sink is reached
        (SystemOutput emitted)."""
        active = self._active()
        idx = start
        while idx < len(active):
            slot = active[idx]
            covering = self._task_covering(slot.kind)
            if covering is not None:
                task_index, task = covering
                self._show_wizard(task_index, task, slot, origin_seq, text, audio)
                return
            if slot.kind in skip:
                idx += 1
                continue
            if slot.kind is SlotKind.TEXT_IN or slot.kind is SlotKind.TEXT_OUT:
                idx += 1  # plain I/O, nothing to invoke
                continue
            result = self._invoke_slot(slot, text, origin_seq, want_nbest=False)
            if result is None:
                return  # adapter error already logged
            out = result.top
            if slot.kind is SlotKind.TTS:
                audio = out
            else:
                out = self._maybe_degrade(slot, out)
                text = out
            self._append(component_actor(slot.kind), EventType.COMPONENT_OUTPUT, {
                "slot": slot.kind.value,
                "origin_seq": origin_seq,
                "text": text if slot.kind is not SlotKind.TTS else None,
                "audio_asset": audio if slot.kind is SlotKind.TTS else None,
                "latency_ms": result.latency_ms,
                "adapter_id": result.adapter_id,
            })
            idx += 1
        self._append(ACTOR_SYSTEM, EventType.SYSTEM_OUTPUT, {
            "origin_seq": origin_seq,
            "action_seq": action_seq,
            "text": text,
            "audio_asset": audio,
            "language": self._output_language(),
        })

    def _show_wizard(self, task_index: int, task: WizardTask, first_slot: ComponentSlot,
                     origin_seq: Optional[int], text: str, audio: Optional[str]) -> None:
        candidates = None
        editable = None
        if first_slot.mode is ComponentMode.CORRECTING:
            want_nbest = bool(first_slot.settings.get("nbest"))
            result = self._invoke_slot(first_slot, text, origin_seq, want_nbest=want_nbest)
            if result is None:
                return  # adapter error already logged; turn aborted
            outputs = [self._maybe_degrade(first_slot, c.payload) for c in result.candidates]
            self._append(component_actor(first_slot.kind), EventType.COMPONENT_OUTPUT, {
                "slot": first_slot.kind.value,
                "origin_seq": origin_seq,
                "text": outputs[0],
                "audio_asset": None,
                "candidates": outputs,
                "latency_ms": result.latency_ms,
                "adapter_id": result.adapter_id,
            })
            if want_nbest:
                candidates = outputs
            else:
                editable = outputs[0]
        self._append(ACTOR_SYSTEM, EventType.WIZARD_SHOWN, {
            "origin_seq": origin_seq,
            "task_index": task_index,
            "task": task.to_dict(),
            "candidates": candidates,
            "editable_text": editable,
            "input_text": text,
        })

    def _invoke_slot(self, slot: ComponentSlot, payload: str, origin_seq: Optional[int],
                     want_nbest: bool):
        adapter_id = slot.settings.get("adapter")
        request = ComponentRequest(
            slot_kind=slot.kind,
            payload=payload,
            source_language=slot.settings.get("source_language") or slot.settings.get("language"),
            target_language=slot.settings.get("target_language") or slot.settings.get("language"),
            want_nbest=want_nbest,
            nbest_size=int(slot.settings.get("nbest_size", 3 if want_nbest else 1)),
        )
        try:
            if adapter_id is None:
                raise AdapterError(f"slot {slot.kind} has no adapter configured")
            return self.registry.invoke(adapter_id, request,
                                        timeout_ms=int(slot.settings.get("timeout_ms", 10_000)))
        except AdapterError as exc:
            # surfaced to the wizard via the event stream; the participant sees nothing
            self._append(component_actor(slot.kind), EventType.ERROR, {
                "message": str(exc),
                "error": type(exc).__name__,
                "slot": slot.kind.value,
                "origin_seq": origin_seq,
            })
            return None

    def _maybe_degrade(self, slot: ComponentSlot, text: str) -> str:
        profile_dict = slot.settings.get("degradation")
        if not profile_dict:
            return text
        return degrade_text(text, DegradationProfile.from_dict(profile_dict))


def start_session(experiment: Experiment, registry: Optional[AdapterRegistry] = None,
                  session_id: Optional[str] = None, log: Optional[EventLogWriter] = None,
                  clock: Callable[[], int] = now_ms) -> SessionRuntime:
    """Validate, snapshot, derive wizard tasks and log SessionStart at seq 0."""
    experiment.validate()
    if experiment.pipeline is None:
        raise InvalidConfig(["experiment has no pipeline"])
    violations = validate(experiment.pipeline)
    if violations:
        raise InvalidConfig(violations)
    snapshot = experiment.snapshot()
    tasks = derive_wizard_tasks(snapshot.pipeline)
    sid = session_id or f"sess-{uuid.uuid4().hex[:12]}"
    session = Session(id=sid, experiment=snapshot, config=snapshot.pipeline, tasks=tasks)
    runtime = SessionRuntime(session, registry=registry, log=log, clock=clock)
    with runtime.lock:
        runtime._append(ACTOR_SYSTEM, EventType.SESSION_START, {
            "session_id": sid,
            "experiment": snapshot.to_dict(),
            "tasks": [t.to_dict() for t in tasks],
        })
    return runtime
