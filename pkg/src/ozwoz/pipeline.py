"""Language-technology interaction pipeline: slots, modes, composition rules.

The pipeline is the fixed chain

    TextIn|ASR -> InputMT -> DM -> OutputMT -> TTS|TextOut

where each slot is Off, BlackBox (fully working), Correcting (wizard
post-edits its output) or Simulating (wizard replaces it).  This module
validates mode combinations for a single-wizard setup, derives the merged
wizard tasks, and enumerates the 16-case input/MT/output design space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .errors import InvalidConfig, ValidationError


class SlotKind(str, Enum):
    TEXT_IN = "TextIn"
    ASR = "ASR"
    INPUT_MT = "InputMT"
    DM = "DM"
    OUTPUT_MT = "OutputMT"
    TTS = "TTS"
    TEXT_OUT = "TextOut"

    def __str__(self) -> str:  # serialized form everywhere
        return self.value


class ComponentMode(str, Enum):
    OFF = "Off"
    BLACK_BOX = "BlackBox"
    CORRECTING = "Correcting"
    SIMULATING = "Simulating"

    def __str__(self) -> str:
        return self.value


PIPELINE_ORDER: tuple[SlotKind, ...] = (
    SlotKind.TEXT_IN,
    SlotKind.ASR,
    SlotKind.INPUT_MT,
    SlotKind.DM,
    SlotKind.OUTPUT_MT,
    SlotKind.TTS,
    SlotKind.TEXT_OUT,
)

INPUT_KINDS = (SlotKind.TEXT_IN, SlotKind.ASR)
OUTPUT_KINDS = (SlotKind.TTS, SlotKind.TEXT_OUT)
MT_KINDS = (SlotKind.INPUT_MT, SlotKind.OUTPUT_MT)


@dataclass(frozen=True)
class ComponentSlot:
    kind: SlotKind
    mode: ComponentMode = ComponentMode.OFF
    # adapter id, languages (language / source_language+target_language),
    # nbest + nbest_size, degradation profile, timeout_ms
    settings: dict[str, Any] = field(default_factory=dict)

    @property
    def active(self) -> bool:
        return self.mode is not ComponentMode.OFF

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mode": self.mode.value, "settings": dict(self.settings)}

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentSlot":
        return cls(
            kind=SlotKind(d["kind"]),
            mode=ComponentMode(d.get("mode", "Off")),
            settings=dict(d.get("settings", {})),
        )


@dataclass(frozen=True)
class RuleViolation:
    rule: str  # R2, R5 composition rules; M1..M3 modality/settings invariants
    slot: SlotKind
    message: str

    def __str__(self) -> str:
        return f"{self.rule} at {self.slot}: {self.message}"


class TaskKind(str, Enum):
    SIMULATE = "Simulate"
    CORRECT = "Correct"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class WizardTask:
    kind: TaskKind
    span: tuple[SlotKind, ...]  # contiguous in pipeline order, non-empty

    def label(self) -> str:
        return f"{self.kind.value.upper()} {'+'.join(k.value for k in self.span)}"

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "span": [k.value for k in self.span]}

    @classmethod
    def from_dict(cls, d: dict) -> "WizardTask":
        return cls(kind=TaskKind(d["kind"]), span=tuple(SlotKind(k) for k in d["span"]))


@dataclass
class PipelineConfig:
    slots: tuple[ComponentSlot, ...]
    case_number: Optional[int] = None  # advisory Table-like case index; validate() is authoritative

    def __post_init__(self):
        kinds = tuple(s.kind for s in self.slots)
        if kinds != PIPELINE_ORDER:
            raise ValidationError(f"pipeline slots must follow the fixed order {[k.value for k in PIPELINE_ORDER]}")

    def slot(self, kind: SlotKind) -> ComponentSlot:
        for s in self.slots:
            if s.kind is kind:
                return s
        raise KeyError(kind)

    def active_slots(self) -> list[ComponentSlot]:
        return [s for s in self.slots if s.active]

    def to_dict(self) -> dict:
        d: dict = {"slots": [s.to_dict() for s in self.slots]}
        if self.case_number is not None:
            d["case_number"] = self.case_number
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        given = {SlotKind(s["kind"]): ComponentSlot.from_dict(s) for s in d.get("slots", [])}
        slots = tuple(given.get(kind, ComponentSlot(kind=kind)) for kind in PIPELINE_ORDER)
        return cls(slots=slots, case_number=d.get("case_number"))

    @classmethod
    def build(cls, case_number: Optional[int] = None, **modes: Any) -> "PipelineConfig":
        """Construct from keyword slots, e.g. build(asr=("Simulating", {"language": "de"})).

        Keys are lowercase slot names (text_in, asr, input_mt, dm, output_mt,
        tts, text_out); values are a mode or a (mode, settings) pair.  Slots
        not named are Off.
        """
        key_for = {k.name.lower(): k for k in PIPELINE_ORDER}
        slots = []
        for kind in PIPELINE_ORDER:
            value = modes.get(kind.name.lower())
            if value is None:
                slots.append(ComponentSlot(kind=kind))
            else:
                if isinstance(value, tuple):
                    mode, settings = value
                else:
                    mode, settings = value, {}
                slots.append(ComponentSlot(kind=kind, mode=ComponentMode(mode), settings=dict(settings)))
        unknown = set(modes) - set(key_for)
        if unknown:
            raise ValidationError(f"unknown pipeline slot(s) {sorted(unknown)}")
        return cls(slots=tuple(slots), case_number=case_number)


@dataclass(frozen=True)
class DesignSpaceCase:
    case_number: int
    input_modality: str  # "Text" | "ASR"
    input_mt: bool
    output_mt: bool
    output_modality: str  # "TTS" | "Text"
    example: str

    def to_dict(self) -> dict:
        return {
            "case_number": self.case_number,
            "input_modality": self.input_modality,
            "input_mt": self.input_mt,
            "output_mt": self.output_mt,
            "output_modality": self.output_modality,
            "example": self.example,
        }


_DESIGN_SPACE: tuple[DesignSpaceCase, ...] = (
    DesignSpaceCase(1, "Text", False, False, "Text", "Natural-Language Interfaces"),
    DesignSpaceCase(2, "ASR", False, False, "Text", "Speech Recognition"),
    DesignSpaceCase(3, "ASR", True, False, "Text", "Text-based Feedback"),
    DesignSpaceCase(4, "Text", True, False, "Text", "Text-to-Text Translation"),
    DesignSpaceCase(5, "Text", False, True, "Text", "Text-to-Text Translation"),
    DesignSpaceCase(6, "Text", False, False, "TTS", "Speech-output"),
    DesignSpaceCase(7, "Text", True, False, "TTS", "Multi-lingual Text-to-Speech"),
    DesignSpaceCase(8, "Text", False, True, "TTS", "Multi-lingual Text-to-Speech"),
    DesignSpaceCase(9, "ASR", True, True, "TTS", "Less common"),
    DesignSpaceCase(10, "Text", True, True, "Text", "Less common"),
    DesignSpaceCase(11, "ASR", True, True, "Text", "Less common"),
    DesignSpaceCase(12, "Text", True, True, "TTS", "Less common"),
    DesignSpaceCase(13, "ASR", True, False, "TTS", "Speech-to-Speech Translation"),
    DesignSpaceCase(14, "ASR", False, True, "TTS", "Speech-to-Speech Translation"),
    DesignSpaceCase(15, "ASR", False, False, "TTS", "In-Car Voice Control"),
    DesignSpaceCase(16, "ASR", False, True, "Text", "Multi-lingual Inf. Retrieval"),
)

_CASE_BY_AXES = {
    (c.input_modality, c.input_mt, c.output_mt, c.output_modality): c.case_number
    for c in _DESIGN_SPACE
}


def enumerate_design_space() -> list[DesignSpaceCase]:
    """The 16 input/MT/output scenario cases, in canonical row order."""
    return list(_DESIGN_SPACE)


def classify(config: PipelineConfig) -> int:
    """Case number for a config's modality/MT axes, independent of modes."""
    for v in _modality_violations(config):
        raise ValidationError(str(v))
    input_modality = "ASR" if config.slot(SlotKind.ASR).active else "Text"
    output_modality = "TTS" if config.slot(SlotKind.TTS).active else "Text"
    key = (
        input_modality,
        config.slot(SlotKind.INPUT_MT).active,
        config.slot(SlotKind.OUTPUT_MT).active,
        output_modality,
    )
    return _CASE_BY_AXES[key]


def _modality_violations(config: PipelineConfig) -> list[RuleViolation]:
    out = []
    n_in = sum(1 for k in INPUT_KINDS if config.slot(k).active)
    n_out = sum(1 for k in OUTPUT_KINDS if config.slot(k).active)
    if n_in != 1:
        out.append(RuleViolation("M1", SlotKind.TEXT_IN,
                                 f"exactly one of TextIn/ASR must be active, found {n_in}"))
    if n_out != 1:
        out.append(RuleViolation("M2", SlotKind.TEXT_OUT,
                                 f"exactly one of TTS/TextOut must be active, found {n_out}"))
    text_in = config.slot(SlotKind.TEXT_IN)
    if text_in.active and text_in.mode is not ComponentMode.BLACK_BOX:
        out.append(RuleViolation("M1", SlotKind.TEXT_IN,
                                 "TextIn is plain input capture; when active its mode is BlackBox"))
    for kind in MT_KINDS:
        slot = config.slot(kind)
        if slot.active:
            if not slot.settings.get("source_language") or not slot.settings.get("target_language"):
                out.append(RuleViolation("M3", kind,
                                         "active MT slots need source_language and target_language"))
    return out


def validate(config: PipelineConfig) -> list[RuleViolation]:
    """Check single-wizard composition rules; an empty list means ok.

    R1: a BlackBox slot composes with neighbours in any state (never flagged).
    R2: a maximal run of Simulating slots must be followed by a BlackBox slot,
        or end at the participant-facing end of the pipeline.
    R5: a Correcting slot's nearest active upstream slot must be BlackBox, or
        the Correcting slot is the first active slot (fed by the participant).
    The Correcting+Simulating merge (R3/R4) lives in derive_wizard_tasks.
    """
    violations = _modality_violations(config)
    active = config.active_slots()

    i = 0
    while i < len(active):
        if active[i].mode is ComponentMode.SIMULATING:
            j = i
            while j + 1 < len(active) and active[j + 1].mode is ComponentMode.SIMULATING:
                j += 1
            if j + 1 < len(active) and active[j + 1].mode is not ComponentMode.BLACK_BOX:
                violations.append(RuleViolation(
                    "R2", active[j].kind,
                    "a simulated run must feed a working (BlackBox) component or the participant"))
            i = j + 1
        else:
            i += 1

    for idx, slot in enumerate(active):
        if slot.mode is ComponentMode.CORRECTING and idx > 0:
            upstream = active[idx - 1]
            if upstream.mode is not ComponentMode.BLACK_BOX:
                violations.append(RuleViolation(
                    "R5", slot.kind,
                    "correction needs a fully working predecessor or direct participant input"))
    return violations


def derive_wizard_tasks(config: PipelineConfig) -> list[WizardTask]:
    """Merge Simulating/Correcting slots into the wizard's ordered task list.

    Consecutive Simulating slots collapse into one Simulate task.  A Correcting
    slot immediately followed by Simulating slots is absorbed into that
    Simulate task (integrated simulation); otherwise it stands alone as a
    Correct task.  BlackBox and Off slots contribute nothing.
    """
    violations = validate(config)
    if violations:
        raise InvalidConfig(violations)

    active = config.active_slots()
    tasks: list[WizardTask] = []
    i = 0
    while i < len(active):
        mode = active[i].mode
        if mode is ComponentMode.BLACK_BOX:
            i += 1
            continue
        span = [active[i].kind]
        j = i + 1
        while j < len(active) and active[j].mode is ComponentMode.SIMULATING:
            span.append(active[j].kind)
            j += 1
        if mode is ComponentMode.CORRECTING and len(span) == 1:
            tasks.append(WizardTask(kind=TaskKind.CORRECT, span=tuple(span)))
        else:
            tasks.append(WizardTask(kind=TaskKind.SIMULATE, span=tuple(span)))
        i = j
    return tasks


def check_report(config: PipelineConfig) -> list[str]:
    """Lines for `pipeline check`: violations if any, else derived task labels."""
    violations = validate(config)
    if violations:
        return [f"VIOLATION {v}" for v in violations]
    return [t.label() for t in derive_wizard_tasks(config)]
