"""ozwoz: a Wizard-of-Oz prototyping server for language-technology applications.

Authoring (model), pipeline composition rules (pipeline), component adapters
(adapters), the live session runtime with event-sourced logs (session),
offline metrics (analysis), and the network front door (server, cli).
"""

from .adapters import (
    AdapterRegistry,
    Candidate,
    ComponentRequest,
    ComponentResult,
    DegradationProfile,
    FunctionAdapter,
    HttpAdapter,
    MockAdapter,
    degrade_delay,
    degrade_text,
    lookup_prepared,
)
from .analysis import (
    TurnRecord,
    consistency,
    extract_turns,
    latency_stats,
    session_report,
    sus_score,
    turns_to_csv,
    utterance_spread,
)
from .errors import (
    AdapterError,
    AdapterTimeout,
    AdapterUnavailable,
    BadPayload,
    CorruptLog,
    IllegalAction,
    InvalidConfig,
    MissingBinding,
    NoData,
    NotFound,
    OzwozError,
    TurnInFlight,
    ValidationError,
)
from .model import (
    DomainRecord,
    Experiment,
    FilterSpec,
    Stage,
    Utterance,
    canonical_json,
    filter_records,
    render_template,
    template_slots,
)
from .pipeline import (
    ComponentMode,
    ComponentSlot,
    DesignSpaceCase,
    PipelineConfig,
    RuleViolation,
    SlotKind,
    TaskKind,
    WizardTask,
    classify,
    derive_wizard_tasks,
    enumerate_design_space,
    validate,
)
from .session import (
    EventLogWriter,
    EventType,
    Session,
    SessionEvent,
    SessionRuntime,
    SessionState,
    read_log,
    replay,
    session_digest,
    start_session,
)

__version__ = "0.1.0"
