"""Experiment authoring model: the CMS-like layer.

An Experiment is a staged dialogue definition: named stages holding ordered
response utterances, a frequently-used quick-access view, domain records with
configurable filters, and a pipeline configuration.  The model is a passive
value store; all mutations to one experiment are expected to be serialized by
the caller (single writer per experiment), and whole-experiment snapshots can
be handed out as immutable values.

Serialization is canonical JSON (sorted keys, UTF-8, no insignificant
whitespace); that exact byte form feeds both the persistence layer and the
session replay digest.
"""

from __future__ import annotations

import copy
import json
import re
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union

from .errors import MissingBinding, NotFound, ValidationError
from .pipeline import PipelineConfig

Scalar = Union[str, int, float]

_SLOT_NAME = re.compile(r"[A-Za-z0-9_]+")


def now_ms() -> int:
    """Current UTC time in integer milliseconds."""
    return int(time.time() * 1000)


def new_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:12]}"


def canonical_json(obj: Any) -> str:
    """Canonical JSON text: lexicographically sorted keys, no extra whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class Utterance:
    id: str
    text: str  # template string, slots as {name}, {{ escapes a literal brace
    language: str  # BCP-47 tag
    pretranslations: dict[str, str] = field(default_factory=dict)
    prerecorded_audio: dict[str, str] = field(default_factory=dict)  # lang -> asset ref
    tags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "language": self.language,
            "pretranslations": dict(self.pretranslations),
            "prerecorded_audio": dict(self.prerecorded_audio),
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Utterance":
        return cls(
            id=d["id"],
            text=d["text"],
            language=d["language"],
            pretranslations=dict(d.get("pretranslations", {})),
            prerecorded_audio=dict(d.get("prerecorded_audio", {})),
            tags=list(d.get("tags", [])),
        )


@dataclass
class Stage:
    id: str
    title: str
    utterance_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "utterance_ids": list(self.utterance_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "Stage":
        return cls(id=d["id"], title=d["title"], utterance_ids=list(d.get("utterance_ids", [])))


@dataclass
class DomainRecord:
    id: str
    attributes: dict[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "attributes": dict(self.attributes)}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainRecord":
        return cls(id=d["id"], attributes=dict(d.get("attributes", {})))


@dataclass
class FilterSpec:
    attribute: str
    allowed_values: set[Scalar] = field(default_factory=set)  # empty = no constraint

    def to_dict(self) -> dict:
        # sets have no JSON form; sort by repr for a stable canonical order
        return {
            "attribute": self.attribute,
            "allowed_values": sorted(self.allowed_values, key=lambda v: (str(type(v).__name__), str(v))),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterSpec":
        return cls(attribute=d["attribute"], allowed_values=set(d.get("allowed_values", [])))


@dataclass
class Experiment:
    id: str
    name: str
    stages: list[Stage] = field(default_factory=list)
    utterances: dict[str, Utterance] = field(default_factory=dict)
    frequently_used: list[str] = field(default_factory=list)
    domain_records: list[DomainRecord] = field(default_factory=list)
    filters: list[FilterSpec] = field(default_factory=list)
    pipeline: Optional[PipelineConfig] = None
    chat_enabled: bool = False
    created_at: int = field(default_factory=now_ms)
    updated_at: int = field(default_factory=now_ms)
    revision: int = 1

    # -- lookups ---------------------------------------------------------

    def stage(self, stage_id: str) -> Stage:
        for s in self.stages:
            if s.id == stage_id:
                return s
        raise NotFound(f"stage {stage_id!r} not found")

    def stage_by_title(self, title: str) -> Optional[Stage]:
        for s in self.stages:
            if s.title == title:
                return s
        return None

    def utterance(self, utterance_id: str) -> Utterance:
        u = self.utterances.get(utterance_id)
        if u is None:
            raise NotFound(f"utterance {utterance_id!r} not found")
        return u

    def home_stage(self, utterance_id: str) -> Stage:
        for s in self.stages:
            if utterance_id in s.utterance_ids:
                return s
        raise NotFound(f"utterance {utterance_id!r} not in any stage")

    def all_utterances(self) -> list[Utterance]:
        """All utterances in stage order, then list order within each stage."""
        return [self.utterances[uid] for s in self.stages for uid in s.utterance_ids]

    # -- mutations -------------------------------------------------------

    def _touch(self) -> None:
        self.updated_at = max(now_ms(), self.updated_at)

    def add_stage(self, title: str, stage_id: Optional[str] = None) -> str:
        if not title.strip():
            raise ValidationError("stage title must be non-empty")
        sid = stage_id or new_id("stage")
        if any(s.id == sid for s in self.stages):
            raise ValidationError(f"duplicate stage id {sid!r}")
        self.stages.append(Stage(id=sid, title=title))
        self._touch()
        return sid

    def create_utterance(
        self,
        stage_id: str,
        text: str,
        language: str,
        *,
        utterance_id: Optional[str] = None,
        pretranslations: Optional[dict[str, str]] = None,
        prerecorded_audio: Optional[dict[str, str]] = None,
        tags: Optional[list[str]] = None,
    ) -> str:
        stage = self.stage(stage_id)
        if not text.strip():
            raise ValidationError("utterance text must be non-empty")
        uid = utterance_id or new_id("utt")
        if uid in self.utterances:
            raise ValidationError(f"duplicate utterance id {uid!r}")
        utt = Utterance(
            id=uid,
            text=text,
            language=language,
            pretranslations=dict(pretranslations or {}),
            prerecorded_audio=dict(prerecorded_audio or {}),
            tags=list(tags or []),
        )
        _check_prepared_languages(utt)
        self.utterances[uid] = utt
        stage.utterance_ids.append(uid)
        self._touch()
        return uid

    def edit_utterance(self, utterance_id: str, *, text: Optional[str] = None,
                       language: Optional[str] = None) -> None:
        utt = self.utterance(utterance_id)
        if text is not None:
            if not text.strip():
                raise ValidationError("utterance text must be non-empty")
            utt.text = text
        if language is not None:
            utt.language = language
            _check_prepared_languages(utt)
        self._touch()

    def delete_utterance(self, utterance_id: str) -> None:
        stage = self.home_stage(utterance_id)
        stage.utterance_ids.remove(utterance_id)
        del self.utterances[utterance_id]
        # referential integrity: the frequently-used view never dangles
        self.frequently_used = [u for u in self.frequently_used if u != utterance_id]
        self._touch()

    def move_utterance(self, utterance_id: str, target_stage_id: str, position: int) -> None:
        self.utterance(utterance_id)
        source = self.home_stage(utterance_id)
        target = self.stage(target_stage_id)
        if not 0 <= position <= len(target.utterance_ids):
            raise ValidationError(
                f"position {position} out of range 0..{len(target.utterance_ids)} "
                f"for stage {target_stage_id!r}"
            )
        source.utterance_ids.remove(utterance_id)
        # list.insert appends when position is past the (possibly shortened) end
        target.utterance_ids.insert(position, utterance_id)
        self._touch()

    def set_frequently_used(self, utterance_id: str, flag: bool) -> None:
        self.utterance(utterance_id)
        present = utterance_id in self.frequently_used
        if flag and not present:
            self.frequently_used.append(utterance_id)
        elif not flag and present:
            self.frequently_used.remove(utterance_id)
        self._touch()

    def set_filters(self, filters: Iterable[FilterSpec]) -> None:
        filters = list(filters)
        names = [f.attribute for f in filters]
        if len(set(names)) != len(names):
            raise ValidationError("filter attributes must be distinct")
        self.filters = filters
        self._touch()

    # -- validation / serialization ---------------------------------------

    def validate(self) -> None:
        """Raise ValidationError unless every model invariant holds."""
        if not self.stages:
            raise ValidationError("experiment needs at least one stage")
        stage_ids = [s.id for s in self.stages]
        if len(set(stage_ids)) != len(stage_ids):
            raise ValidationError("stage ids must be unique")
        seen: dict[str, str] = {}
        for s in self.stages:
            for uid in s.utterance_ids:
                if uid in seen:
                    raise ValidationError(f"utterance {uid!r} appears in stages {seen[uid]!r} and {s.id!r}")
                seen[uid] = s.id
                if uid not in self.utterances:
                    raise ValidationError(f"stage {s.id!r} references unknown utterance {uid!r}")
        for uid in self.utterances:
            if uid not in seen:
                raise ValidationError(f"utterance {uid!r} is not in any stage")
        for uid in self.frequently_used:
            if uid not in seen:
                raise ValidationError(f"frequently_used references unknown utterance {uid!r}")
        names = [f.attribute for f in self.filters]
        if len(set(names)) != len(names):
            raise ValidationError("filter attributes must be distinct")
        for rec in self.domain_records:
            for attr in rec.attributes:
                if not attr:
                    raise ValidationError(f"domain record {rec.id!r} has an empty attribute name")
        rec_ids = [r.id for r in self.domain_records]
        if len(set(rec_ids)) != len(rec_ids):
            raise ValidationError("domain record ids must be unique")
        for utt in self.utterances.values():
            if not utt.text.strip():
                raise ValidationError(f"utterance {utt.id!r} has empty text")
            _check_prepared_languages(utt)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "stages": [s.to_dict() for s in self.stages],
            "utterances": {uid: u.to_dict() for uid, u in self.utterances.items()},
            "frequently_used": list(self.frequently_used),
            "domain_records": [r.to_dict() for r in self.domain_records],
            "filters": [f.to_dict() for f in self.filters],
            "pipeline": self.pipeline.to_dict() if self.pipeline else None,
            "chat_enabled": self.chat_enabled,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "revision": self.revision,
        }

    def to_canonical_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Experiment":
        exp = cls(
            id=d["id"],
            name=d["name"],
            frequently_used=list(d.get("frequently_used", [])),
            domain_records=[DomainRecord.from_dict(r) for r in d.get("domain_records", [])],
            filters=[FilterSpec.from_dict(f) for f in d.get("filters", [])],
            pipeline=PipelineConfig.from_dict(d["pipeline"]) if d.get("pipeline") else None,
            chat_enabled=bool(d.get("chat_enabled", False)),
            created_at=int(d.get("created_at", now_ms())),
            updated_at=int(d.get("updated_at", now_ms())),
            revision=int(d.get("revision", 1)),
        )
        exp.stages = [Stage.from_dict(s) for s in d.get("stages", [])]
        for uid, ud in d.get("utterances", {}).items():
            exp.utterances[uid] = Utterance.from_dict({"id": uid, **ud})
        return exp

    def snapshot(self) -> "Experiment":
        """Deep, independent copy — safe to hand to a running session."""
        return Experiment.from_dict(copy.deepcopy(self.to_dict()))


def _check_prepared_languages(utt: Utterance) -> None:
    for lang in list(utt.pretranslations) + list(utt.prerecorded_audio):
        if not lang or lang == utt.language:
            raise ValidationError(
                f"utterance {utt.id!r}: prepared-content language {lang!r} must be a "
                f"tag distinct from {utt.language!r}"
            )


def filter_records(records: Iterable[DomainRecord], filters: Iterable[FilterSpec]) -> list[DomainRecord]:
    """Apply faceted filters: conjunction across attributes, disjunction within values.

    A filter with an empty allowed_values set is no constraint.  Records missing
    a constrained attribute are excluded by that filter.  Input order preserved.
    """
    active = [f for f in filters if f.allowed_values]
    out = []
    for rec in records:
        if all(f.attribute in rec.attributes and rec.attributes[f.attribute] in f.allowed_values
               for f in active):
            out.append(rec)
    return out


def parse_template(template: str) -> list[tuple[str, str]]:
    """Split a template into ("lit", text) / ("slot", name) segments.

    Slot syntax is {name} with name in [A-Za-z0-9_]+; "{{" and "}}" are escapes
    for literal braces.  Raises ValidationError on unbalanced or malformed
    templates.
    """
    segments: list[tuple[str, str]] = []
    lit: list[str] = []
    i = 0
    n = len(template)
    while i < n:
        ch = template[i]
        if ch == "{":
            if i + 1 < n and template[i + 1] == "{":
                lit.append("{")
                i += 2
                continue
            end = template.find("}", i + 1)
            if end == -1:
                raise ValidationError("unbalanced '{' in template")
            name = template[i + 1:end]
            if not _SLOT_NAME.fullmatch(name):
                raise ValidationError(f"bad slot name {name!r} in template")
            if lit:
                segments.append(("lit", "".join(lit)))
                lit = []
            segments.append(("slot", name))
            i = end + 1
        elif ch == "}":
            if i + 1 < n and template[i + 1] == "}":
                lit.append("}")
                i += 2
                continue
            raise ValidationError("unbalanced '}' in template")
        else:
            lit.append(ch)
            i += 1
    if lit:
        segments.append(("lit", "".join(lit)))
    return segments


def template_slots(template: str) -> list[str]:
    """Slot names in order of first appearance."""
    names: list[str] = []
    for kind, value in parse_template(template):
        if kind == "slot" and value not in names:
            names.append(value)
    return names


def render_template(template: str, bindings: dict[str, str]) -> str:
    """Substitute every {name} slot from bindings; {{ }} escape literal braces."""
    out: list[str] = []
    for kind, value in parse_template(template):
        if kind == "lit":
            out.append(value)
        else:
            if value not in bindings:
                raise MissingBinding(value)
            out.append(str(bindings[value]))
    return "".join(out)
