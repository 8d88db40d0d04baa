"""Uniform interface to ASR/MT/TTS components.

Adapters hide where a component lives: a JSON fixture (mock), an in-process
function (echo, handy for scripted tests), or a remote web service speaking
the POST /process contract.  The registry enforces timeouts and optional
single-flight serialization so a slow or non-reentrant component can never
stall a session queue.

Also here: the pre-translation/pre-recording store lookup and deterministic
error/delay injection used to make BlackBox components behave like imperfect
ones.
"""

from __future__ import annotations

import json
import random
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import AdapterTimeout, AdapterUnavailable, BadPayload, ValidationError
from .model import Utterance
from .pipeline import SlotKind


@dataclass(frozen=True)
class ComponentRequest:
    slot_kind: SlotKind
    payload: str  # text, or an audio asset reference for ASR input / TTS output
    source_language: Optional[str] = None
    target_language: Optional[str] = None
    want_nbest: bool = False
    nbest_size: int = 1

    def to_dict(self) -> dict:
        return {
            "slot_kind": self.slot_kind.value,
            "payload": self.payload,
            "source_language": self.source_language,
            "target_language": self.target_language,
            "want_nbest": self.want_nbest,
            "nbest_size": self.nbest_size,
        }


@dataclass(frozen=True)
class Candidate:
    payload: str
    score: float


@dataclass
class ComponentResult:
    candidates: list[Candidate]
    latency_ms: int
    adapter_id: str

    @property
    def top(self) -> str:
        return self.candidates[0].payload

    def to_dict(self) -> dict:
        return {
            "candidates": [[c.payload, c.score] for c in self.candidates],
            "latency_ms": self.latency_ms,
            "adapter_id": self.adapter_id,
        }


@dataclass(frozen=True)
class DegradationProfile:
    substitution_rate: float = 0.0
    deletion_rate: float = 0.0
    fixed_delay_ms: int = 0
    jitter_ms: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("substitution_rate", "deletion_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"{name} must be in [0,1], got {rate}")
        if self.substitution_rate + self.deletion_rate > 1.0:
            raise ValidationError("substitution_rate + deletion_rate must not exceed 1")
        if self.fixed_delay_ms < 0 or self.jitter_ms < 0:
            raise ValidationError("delays must be non-negative")

    def to_dict(self) -> dict:
        return {
            "substitution_rate": self.substitution_rate,
            "deletion_rate": self.deletion_rate,
            "fixed_delay_ms": self.fixed_delay_ms,
            "jitter_ms": self.jitter_ms,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationProfile":
        return cls(
            substitution_rate=float(d.get("substitution_rate", 0.0)),
            deletion_rate=float(d.get("deletion_rate", 0.0)),
            fixed_delay_ms=int(d.get("fixed_delay_ms", 0)),
            jitter_ms=int(d.get("jitter_ms", 0)),
            seed=int(d.get("seed", 0)),
        )


class Adapter:
    """One registered component endpoint."""

    def __init__(self, adapter_id: str, slot_kind: SlotKind, single_flight: bool = False):
        self.id = adapter_id
        self.slot_kind = slot_kind
        self.single_flight = single_flight

    def process(self, request: ComponentRequest) -> list[Candidate]:
        raise NotImplementedError


class MockAdapter(Adapter):
    """Fixture-backed adapter: exact-match table with an optional default entry.

    Fixture format: JSON list of {"match": <input string>, "candidates":
    [[payload, score], ...]}; an entry without "match" (or with "default":
    true) catches everything else.
    """

    def __init__(self, adapter_id: str, slot_kind: SlotKind, entries: list[dict],
                 single_flight: bool = False):
        super().__init__(adapter_id, slot_kind, single_flight)
        self._table: dict[str, list[Candidate]] = {}
        self._default: Optional[list[Candidate]] = None
        for entry in entries:
            candidates = [Candidate(payload=c[0], score=float(c[1])) for c in entry["candidates"]]
            if "match" in entry and not entry.get("default"):
                self._table[entry["match"]] = candidates
            else:
                self._default = candidates

    @classmethod
    def from_file(cls, adapter_id: str, slot_kind: SlotKind, path: str | Path,
                  single_flight: bool = False) -> "MockAdapter":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(adapter_id, slot_kind, entries, single_flight)

    def process(self, request: ComponentRequest) -> list[Candidate]:
        candidates = self._table.get(request.payload, self._default)
        if candidates is None:
            raise AdapterUnavailable(f"mock {self.id!r} has no entry for {request.payload!r}")
        return list(candidates)


class FunctionAdapter(Adapter):
    """Wraps a plain function payload -> payload; used for echo/transform stubs."""

    def __init__(self, adapter_id: str, slot_kind: SlotKind, fn: Callable[[str], str],
                 single_flight: bool = False):
        super().__init__(adapter_id, slot_kind, single_flight)
        self._fn = fn

    def process(self, request: ComponentRequest) -> list[Candidate]:
        return [Candidate(payload=self._fn(request.payload), score=1.0)]


class HttpAdapter(Adapter):
    """Remote component speaking POST {base_url}/process with a JSON request body.

    Expected response: {"candidates": [[payload, score], ...]}.
    """

    def __init__(self, adapter_id: str, slot_kind: SlotKind, base_url: str,
                 single_flight: bool = False):
        super().__init__(adapter_id, slot_kind, single_flight)
        self.base_url = base_url.rstrip("/")

    def process(self, request: ComponentRequest) -> list[Candidate]:
        body = json.dumps(request.to_dict()).encode("utf-8")
        req = urllib.request.Request(
            f"{self.base_url}/process", data=body,
            headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except urllib.error.URLError as exc:
            raise AdapterUnavailable(f"adapter {self.id!r} unreachable: {exc}") from exc
        return [Candidate(payload=c[0], score=float(c[1])) for c in data["candidates"]]


class AdapterRegistry:
    """Adapter lookup plus timeout/single-flight enforcement around invoke."""

    def __init__(self, max_workers: int = 8):
        self._adapters: dict[str, Adapter] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="adapter")

    def register(self, adapter: Adapter) -> None:
        self._adapters[adapter.id] = adapter
        if adapter.single_flight:
            self._locks[adapter.id] = threading.Lock()

    def get(self, adapter_id: str) -> Adapter:
        adapter = self._adapters.get(adapter_id)
        if adapter is None:
            raise AdapterUnavailable(f"no adapter registered under {adapter_id!r}")
        return adapter

    def invoke(self, adapter_id: str, request: ComponentRequest,
               timeout_ms: int = 10_000) -> ComponentResult:
        adapter = self.get(adapter_id)
        if adapter.slot_kind is not request.slot_kind:
            raise BadPayload(
                f"adapter {adapter_id!r} serves {adapter.slot_kind}, not {request.slot_kind}")
        _check_request(request)

        def run() -> list[Candidate]:
            lock = self._locks.get(adapter_id)
            if lock is not None:
                with lock:
                    return adapter.process(request)
            return adapter.process(request)

        started = time.monotonic()
        future = self._pool.submit(run)
        try:
            candidates = future.result(timeout=timeout_ms / 1000.0)
        except FutureTimeout:
            future.cancel()
            raise AdapterTimeout(f"adapter {adapter_id!r} exceeded {timeout_ms} ms")
        latency_ms = int((time.monotonic() - started) * 1000)

        if not candidates:
            raise AdapterUnavailable(f"adapter {adapter_id!r} returned no candidates")
        if any(candidates[i].score < candidates[i + 1].score for i in range(len(candidates) - 1)):
            raise BadPayload(f"adapter {adapter_id!r} returned unsorted candidate scores")
        if not request.want_nbest:
            candidates = candidates[:1]
        else:
            candidates = candidates[:max(request.nbest_size, 1)]
        return ComponentResult(candidates=candidates, latency_ms=latency_ms, adapter_id=adapter_id)

    def load_file(self, path: str | Path) -> int:
        """Load an adapters.json registry file; returns the number registered.

        Format: [{"id", "slot_kind", "url" | "mock_fixture_path",
        "single_flight": bool}, ...].  Relative fixture paths resolve against
        the registry file's directory.
        """
        path = Path(path)
        entries = json.loads(path.read_text(encoding="utf-8"))
        count = 0
        for entry in entries:
            kind = SlotKind(entry["slot_kind"])
            single = bool(entry.get("single_flight", False))
            if "url" in entry:
                self.register(HttpAdapter(entry["id"], kind, entry["url"], single))
            elif "mock_fixture_path" in entry:
                fixture = Path(entry["mock_fixture_path"])
                if not fixture.is_absolute():
                    fixture = path.parent / fixture
                self.register(MockAdapter.from_file(entry["id"], kind, fixture, single))
            else:
                raise ValidationError(f"registry entry {entry.get('id')!r} needs url or mock_fixture_path")
            count += 1
        return count


def _check_request(request: ComponentRequest) -> None:
    if request.slot_kind in (SlotKind.INPUT_MT, SlotKind.OUTPUT_MT):
        if not request.source_language or not request.target_language:
            raise BadPayload("MT requests need source and target languages")
        if request.source_language == request.target_language:
            raise BadPayload("MT requests need source != target")
    if request.slot_kind is SlotKind.TTS and not isinstance(request.payload, str):
        raise BadPayload("TTS requests carry a text payload")
    if request.nbest_size < 1:
        raise BadPayload("nbest_size must be positive")


@dataclass(frozen=True)
class PreparedOutput:
    text: Optional[str]
    audio_asset: Optional[str]


def lookup_prepared(utterance: Utterance, target_language: str) -> Optional[PreparedOutput]:
    """Stored pre-translation / pre-recording for a language, if any.

    Never invokes a live component; returns None when the utterance has
    nothing prepared for that language.
    """
    text = utterance.pretranslations.get(target_language)
    audio = utterance.prerecorded_audio.get(target_language)
    if text is None and audio is None:
        return None
    return PreparedOutput(text=text, audio_asset=audio)


# Fixed confusion vocabulary for plausible-looking substitution errors.
_CONFUSION_WORDS = (
    "a", "an", "at", "on", "to", "the", "and", "for", "but", "had", "her", "his",
    "was", "saw", "two", "too", "now", "know", "no", "book", "cook", "look",
    "took", "hook", "word", "ward", "work", "walk", "talk", "flight", "fright",
    "slight", "bright", "plain", "plane", "train", "brain", "wheel", "while",
    "whale", "their", "there", "where", "wear", "night", "right", "light",
    "sight", "might", "thought", "brought", "through", "though", "weather",
    "whether", "patient", "station", "nation",
)
_CONFUSION_BY_LEN: dict[int, tuple[str, ...]] = {}
for _w in _CONFUSION_WORDS:
    _CONFUSION_BY_LEN.setdefault(len(_w), ())
    _CONFUSION_BY_LEN[len(_w)] = _CONFUSION_BY_LEN[len(_w)] + (_w,)
_CONFUSION_ALPHABET = "etaoinshrdlu"


def _placeholder(token: str, rng: random.Random) -> str:
    candidates = [w for w in _CONFUSION_BY_LEN.get(len(token), ()) if w != token]
    if candidates:
        return rng.choice(candidates)
    out = "".join(rng.choice(_CONFUSION_ALPHABET) for _ in range(len(token)))
    if out == token:  # substitution must visibly alter the token
        shifted = (_CONFUSION_ALPHABET.index(out[0]) + 1) % len(_CONFUSION_ALPHABET)
        out = _CONFUSION_ALPHABET[shifted] + out[1:]
    return out


def degrade_text(text: str, profile: DegradationProfile) -> str:
    """Inject seeded, reproducible token errors.

    Each whitespace-delimited token is independently substituted (same-length
    placeholder from a fixed confusion list) with probability
    substitution_rate, or deleted with probability deletion_rate; otherwise it
    passes through.  Output is deterministic for equal (text, seed).
    """
    rng = random.Random(profile.seed)
    out: list[str] = []
    for token in text.split():
        u = rng.random()
        if u < profile.substitution_rate:
            out.append(_placeholder(token, rng))
        elif u < profile.substitution_rate + profile.deletion_rate:
            continue
        else:
            out.append(token)
    return " ".join(out)


def degrade_delay(profile: DegradationProfile, rng: Optional[random.Random] = None) -> int:
    """fixed_delay_ms plus a uniform jitter in [0, jitter_ms], seeded."""
    if rng is None:
        rng = random.Random(profile.seed)
    if profile.jitter_ms == 0:
        return profile.fixed_delay_ms
    return profile.fixed_delay_ms + rng.randint(0, profile.jitter_ms)
