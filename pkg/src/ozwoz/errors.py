"""Exception hierarchy shared by all ozwoz modules.

Every error that crosses a module boundary derives from OzwozError so the
server layer can map them onto HTTP status codes / protocol replies in one
place.
"""

from __future__ import annotations


class OzwozError(Exception):
    """Base class for all ozwoz errors."""


class NotFound(OzwozError):
    """A referenced entity (experiment, stage, utterance, ...) does not exist."""


class ValidationError(OzwozError):
    """Input violates a precondition or a model invariant."""


class MissingBinding(ValidationError):
    """A template slot has no value in the binding map."""

    def __init__(self, name: str):
        super().__init__(f"no binding for slot {name!r}")
        self.name = name


class InvalidConfig(OzwozError):
    """A pipeline configuration fails the composition rules."""

    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations) or "invalid pipeline")
        self.violations = list(violations)


class TurnInFlight(OzwozError):
    """Participant input arrived while a previous turn is still pending."""


class IllegalAction(OzwozError):
    """A wizard action is not legal for the current pending state."""


class CorruptLog(OzwozError):
    """An event log failed a well-formedness check during replay."""

    def __init__(self, seq: int, reason: str):
        super().__init__(f"corrupt log at seq {seq}: {reason}")
        self.seq = seq
        self.reason = reason


class NoData(OzwozError):
    """A metric has no qualifying input."""


class AdapterError(OzwozError):
    """Base class for component adapter failures."""


class AdapterUnavailable(AdapterError):
    """No adapter registered under the requested id, or it cannot serve."""


class AdapterTimeout(AdapterError):
    """A component invocation exceeded its deadline."""


class BadPayload(AdapterError):
    """The request payload does not fit the component kind."""
