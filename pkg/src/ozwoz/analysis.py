"""Offline metrics over session logs: latency, spread, consistency, SUS.

All functions are pure batch operations over immutable event lists; a session
log produced live and one rebuilt by replay yield identical turn tables.
"""

from __future__ import annotations

import csv
import io
import math
import re
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import CorruptLog, NoData, ValidationError
from .session import EventType, SessionEvent

CSV_COLUMNS = "input_seq,input_ts,output_ts,latency_ms,utterance_id,input_text,output_text,ack_ts"


@dataclass
class TurnRecord:
    output_seq: int
    output_ts: int
    output_text: str
    input_seq: Optional[int] = None
    input_ts: Optional[int] = None
    wizard_action_seq: Optional[int] = None
    wizard_action_ts: Optional[int] = None
    ack_ts: Optional[int] = None
    utterance_id: Optional[str] = None
    input_text: Optional[str] = None
    input_text_normalized: Optional[str] = None


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip terminal punctuation."""
    out = _WS.sub(" ", text.strip().lower())
    return out.rstrip(".!?,;:")


def extract_turns(events: Sequence[SessionEvent]) -> list[TurnRecord]:
    """One record per SystemOutput, linked back through origin/action seqs.

    Wizard-initiated outputs keep their input fields empty.  Delivery acks are
    matched by output seq.
    """
    by_seq: dict[int, SessionEvent] = {}
    expected = 0
    for ev in events:
        if ev.seq != expected:
            raise CorruptLog(ev.seq, f"expected seq {expected}")
        expected += 1
        by_seq[ev.seq] = ev

    turns: list[TurnRecord] = []
    records_by_output: dict[int, TurnRecord] = {}
    for ev in events:
        if ev.type is not EventType.SYSTEM_OUTPUT:
            continue
        rec = TurnRecord(output_seq=ev.seq, output_ts=ev.ts, output_text=ev.payload["text"])
        origin_seq = ev.payload.get("origin_seq")
        if origin_seq is not None:
            origin = by_seq.get(origin_seq)
            if origin is None or origin.type is not EventType.PARTICIPANT_INPUT:
                raise CorruptLog(ev.seq, f"origin_seq {origin_seq} is not a ParticipantInput")
            rec.input_seq = origin.seq
            rec.input_ts = origin.ts
            raw = origin.payload.get("text")
            if raw is None:
                if origin.payload.get("kind") == "speech":
                    raw = f"[speech:{origin.payload.get('asset_id', '?')}]"
                else:
                    raw = "[speech]"
            rec.input_text = raw
            rec.input_text_normalized = normalize_text(raw)
        action_seq = ev.payload.get("action_seq")
        if action_seq is not None:
            action = by_seq.get(action_seq)
            if action is None or action.type is not EventType.WIZARD_ACTION:
                raise CorruptLog(ev.seq, f"action_seq {action_seq} is not a WizardAction")
            rec.wizard_action_seq = action.seq
            rec.wizard_action_ts = action.ts
            rec.utterance_id = action.payload.get("utterance_id")
        turns.append(rec)
        records_by_output[ev.seq] = rec
    for ev in events:
        if ev.type is EventType.DELIVERY_ACK:
            rec = records_by_output.get(ev.payload["output_seq"])
            if rec is not None:
                rec.ack_ts = ev.ts
    return turns


def latency_stats(turns: Iterable[TurnRecord]) -> dict[str, float]:
    """mean/median/p95/max of output_ts - input_ts, in milliseconds.

    p95 uses inclusive linear interpolation (the spreadsheet convention).
    """
    latencies = sorted(
        t.output_ts - t.input_ts for t in turns
        if t.input_ts is not None and t.output_ts is not None
    )
    if not latencies:
        raise NoData("no turns with both input and output timestamps")
    return {
        "mean": statistics.fmean(latencies),
        "median": statistics.median(latencies),
        "p95": _percentile(latencies, 0.95),
        "max": float(latencies[-1]),
    }


def _percentile(sorted_values: Sequence[int | float], p: float) -> float:
    if len(sorted_values) == 1:
        return float(sorted_values[0])
    rank = (len(sorted_values) - 1) * p
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return float(sorted_values[lo])
    frac = rank - lo
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac


def utterance_spread(turns: Iterable[TurnRecord]) -> float:
    """Normalized Shannon entropy of utterance usage; 0 when a single id is used."""
    counts: dict[str, int] = {}
    for t in turns:
        if t.utterance_id is not None:
            counts[t.utterance_id] = counts.get(t.utterance_id, 0) + 1
    if not counts:
        raise NoData("no turns used a catalogued utterance")
    k = len(counts)
    if k == 1:
        return 0.0
    total = sum(counts.values())
    entropy = -sum((c / total) * math.log2(c / total) for c in counts.values())
    return entropy / math.log2(k)


def consistency(turns: Iterable[TurnRecord]) -> float:
    """Mean modal-response share over groups of repeated (normalized) inputs.

    Turns without participant input (wizard-initiated) are not comparable and
    are left out.
    """
    groups: dict[str, list[str]] = {}
    for t in turns:
        if t.input_text_normalized:
            groups.setdefault(t.input_text_normalized, []).append(t.output_text)
    shares = []
    for outputs in groups.values():
        if len(outputs) < 2:
            continue
        top = max(outputs.count(o) for o in set(outputs))
        shares.append(top / len(outputs))
    if not shares:
        raise NoData("no repeated inputs to compare")
    return statistics.fmean(shares)


def sus_score(responses: Sequence[int]) -> float:
    """Score a 10-item, 7-point usability questionnaire onto 0..100.

    Odd-numbered items contribute (r - 1), even-numbered items (7 - r); the
    sum of contributions (0..60) is scaled by 5/3.
    """
    responses = list(responses)
    if len(responses) != 10:
        raise ValidationError(f"need exactly 10 responses, got {len(responses)}")
    total = 0
    for i, r in enumerate(responses, start=1):
        if not isinstance(r, int) or isinstance(r, bool) or not 1 <= r <= 7:
            raise ValidationError(f"response {i} must be an integer in 1..7, got {r!r}")
        total += (r - 1) if i % 2 == 1 else (7 - r)
    return total * 5 / 3


def turns_to_csv(turns: Iterable[TurnRecord]) -> str:
    """Fixed-column turn table for downstream tooling."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS.split(","))
    for t in turns:
        latency = ""
        if t.input_ts is not None and t.output_ts is not None:
            latency = t.output_ts - t.input_ts
        writer.writerow([
            _blank(t.input_seq), _blank(t.input_ts), t.output_ts, latency,
            _blank(t.utterance_id), _blank(t.input_text), t.output_text, _blank(t.ack_ts),
        ])
    return buf.getvalue()


def _blank(value) -> str:
    return "" if value is None else value


def session_report(turns: Sequence[TurnRecord]) -> dict:
    """The `analyze` summary: metric values or null where a metric has no data."""
    report: dict = {"n_turns": len(turns)}
    for key, fn in (("latency", latency_stats), ("spread", utterance_spread),
                    ("consistency", consistency)):
        try:
            report[key] = fn(turns)
        except NoData:
            report[key] = None
    return report
