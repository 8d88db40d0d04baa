"""Network front door: REST CRUD, the real-time session channel, assets, UI.

Single-process server over the standard library HTTP stack.  REST handles
experiment authoring and session creation; the /channel endpoint upgrades to
a WebSocket carrying JSON text frames validated against the shared message
schema (schema/messages.json).  All session mutations funnel through the
per-session runtime queue; connection handling is one thread per socket.

Capability tokens embedded in the join URLs are the only authentication:
the wizard URL and the participant URL map to roles, and every message a
participant can receive is filtered so nothing about the wizard side leaks.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import queue
import re
import secrets
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .adapters import AdapterRegistry
from .errors import (
    IllegalAction,
    InvalidConfig,
    NotFound,
    OzwozError,
    TurnInFlight,
    ValidationError,
)
from .model import Experiment, canonical_json, new_id, now_ms
from .pipeline import PipelineConfig, enumerate_design_space, validate
from .session import (
    EventLogWriter,
    EventType,
    Session,
    SessionEvent,
    SessionRuntime,
    replay,
    start_session,
)
from .store import DataStore
from .wire import (
    ConnectionClosed,
    OP_PONG,
    OP_TEXT,
    ReceiveTimeout,
    WSConnection,
    server_handshake_response,
)

logger = logging.getLogger("ozwoz.server")

MESSAGE_SCHEMA = json.loads(
    resources.files("ozwoz").joinpath("schema/messages.json").read_text(encoding="utf-8"))
_VALIDATOR = jsonschema.Draft202012Validator(MESSAGE_SCHEMA)

CSV_HEADER = ["stage", "text", "language", "frequently_used"]

ROLE_PERMISSIONS = {
    "participant": {"hello", "state_sync", "ParticipantInput", "DeliveryAck", "Error"},
    "wizard": {"hello", "state_sync", "WizardAction", "Note", "FilterChange",
               "StageSwitch", "SessionEnd", "Error"},
}

# Everything a participant client may ever receive; all other events are
# wizard-only and must never cross that channel.
_PARTICIPANT_EVENT_FIELDS = {
    EventType.SYSTEM_OUTPUT: ("text", "audio_asset", "language"),
    EventType.SESSION_END: ("reason",),
}


def import_utterances_csv(experiment: Experiment, csv_bytes: bytes) -> int:
    """All-or-nothing CSV ingest; header must be exactly stage,text,language,frequently_used.

    Stage names that do not exist yet are created on the fly (authoring is
    meant to feel like sketching).  Returns the number of utterances created.
    """
    try:
        text = csv_bytes.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ValidationError(f"CSV is not valid UTF-8: {exc}")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ValidationError(f"CSV header must be exactly {','.join(CSV_HEADER)}")
    count = 0
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ValidationError(f"row {lineno}: expected 4 columns, got {len(row)}")
        stage_name, utt_text, language, flag = row
        if flag not in ("true", "false"):
            raise ValidationError(f"row {lineno}: frequently_used must be true or false")
        if not utt_text.strip():
            raise ValidationError(f"row {lineno}: empty utterance text")
        if not stage_name.strip():
            raise ValidationError(f"row {lineno}: empty stage name")
        stage = experiment.stage_by_title(stage_name)
        stage_id = stage.id if stage else experiment.add_stage(stage_name)
        uid = experiment.create_utterance(stage_id, utt_text, language)
        if flag == "true":
            experiment.set_frequently_used(uid, True)
        count += 1
    return count


def wizard_view(session: Session) -> dict:
    return {
        "session_id": session.id,
        "state": session.state.value,
        "experiment": session.experiment.to_dict(),
        "tasks": [t.to_dict() for t in session.tasks],
        "history": [h.to_dict() for h in session.history],
        "pending": session.pending.to_dict() if session.pending else None,
        "notes": list(session.notes),
        "errors": list(session.errors),
        "current_filters": dict(session.current_filters),
        "active_stage": session.active_stage,
        "last_seq": session.next_seq - 1,
    }


def participant_view(session: Session) -> dict:
    return {
        "session_id": session.id,
        "state": session.state.value,
        "outputs": [
            {"seq": h.seq, "text": h.text, "audio_asset": h.audio_asset}
            for h in session.history if h.source == "system"
        ],
        "busy": session.pending is not None,
    }


def event_message(event: SessionEvent, session_id: str, role: str) -> Optional[dict]:
    """Role-filtered channel copy of a logged event; None = not for this role."""
    if role == "wizard":
        return {
            "type": event.type.value,
            "session_id": session_id,
            "seq": event.seq,
            "ts": event.ts,
            "actor": event.actor,
            "payload": event.payload,
        }
    fields = _PARTICIPANT_EVENT_FIELDS.get(event.type)
    if fields is None:
        return None
    return {
        "type": event.type.value,
        "session_id": session_id,
        "seq": event.seq,
        "ts": event.ts,
        "payload": {k: event.payload.get(k) for k in fields},
    }


class ChannelClient:
    """One live channel connection with a decoupled outbound queue, so a slow
    socket never blocks the session event queue."""

    def __init__(self, conn: WSConnection, session_id: str, role: str):
        self.conn = conn
        self.session_id = session_id
        self.role = role
        self.alive = True
        self._outq: queue.Queue = queue.Queue(maxsize=512)
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def send(self, message: dict) -> None:
        if not self.alive:
            return
        try:
            self._outq.put_nowait(message)
        except queue.Full:
            self.alive = False

    def _write_loop(self) -> None:
        while True:
            message = self._outq.get()
            if message is None:
                return
            try:
                self.conn.send_text(json.dumps(message))
            except ConnectionClosed:
                self.alive = False
                return

    def stop(self) -> None:
        self.alive = False
        try:
            self._outq.put_nowait(None)
        except queue.Full:
            pass


class OzwozServer:
    def __init__(self, data_dir: str | Path, host: str = "127.0.0.1", port: int = 0,
                 ping_interval: float = 20.0, disconnect_grace: float = 60.0,
                 registry: Optional[AdapterRegistry] = None,
                 ui_dir: Optional[str | Path] = None):
        self.store = DataStore(data_dir)
        self.ping_interval = ping_interval
        self.disconnect_grace = disconnect_grace
        self._grace_timers: dict[str, threading.Timer] = {}
        self.registry = registry or AdapterRegistry()
        adapters_file = self.store.adapters_file()
        if adapters_file is not None:
            self.registry.load_file(adapters_file)
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.runtimes: dict[str, SessionRuntime] = {}
        self.hub: dict[str, list[ChannelClient]] = {}
        self.tokens: dict[str, tuple[str, str]] = {}
        self.lock = threading.Lock()
        for sid, record in self.store.session_index().items():
            self.tokens[record["wizard_token"]] = (sid, "wizard")
            self.tokens[record["participant_token"]] = (sid, "participant")
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._serving = False

    @property
    def port(self) -> int:
        return self.httpd.server_port

    @property
    def host(self) -> str:
        return self.httpd.server_address[0]

    def serve_forever(self) -> None:
        self._serving = True
        self.httpd.serve_forever()

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def shutdown(self) -> None:
        if self._serving:
            self.httpd.shutdown()  # blocks unless serve_forever is looping
            self._serving = False
        self.httpd.server_close()

    # -- sessions ------------------------------------------------------------

    def create_session(self, experiment_id: str) -> dict:
        experiment = self.store.get_experiment(experiment_id)
        session_id = f"sess-{secrets.token_hex(6)}"
        writer = EventLogWriter(self.store.log_path(session_id))
        runtime = start_session(experiment, registry=self.registry,
                                session_id=session_id, log=writer)
        record = {
            "experiment_id": experiment_id,
            "wizard_token": secrets.token_urlsafe(16),
            "participant_token": secrets.token_urlsafe(16),
            "created_at": now_ms(),
        }
        with self.lock:
            self.runtimes[session_id] = runtime
            self.hub[session_id] = []
            self.tokens[record["wizard_token"]] = (session_id, "wizard")
            self.tokens[record["participant_token"]] = (session_id, "participant")
        runtime.on_event(lambda ev, sid=session_id: self._broadcast(sid, ev))
        self.store.register_session(session_id, record)
        base = f"http://{self.host}:{self.port}"
        return {
            "session_id": session_id,
            "wizard_token": record["wizard_token"],
            "participant_token": record["participant_token"],
            "wizard_url": f"{base}/ui/wizard?token={record['wizard_token']}",
            "participant_url": f"{base}/ui/participant?token={record['participant_token']}",
        }

    def ensure_runtime(self, session_id: str) -> SessionRuntime:
        """Live runtime; after a restart the session is rebuilt by replaying
        its log (torn tail repaired first), then continues accepting events."""
        with self.lock:
            runtime = self.runtimes.get(session_id)
            if runtime is not None:
                return runtime
            events = self.store.repair_log(session_id)
            session = replay(events)
            runtime = SessionRuntime(session, registry=self.registry,
                                     log=EventLogWriter(self.store.log_path(session_id)))
            runtime.on_event(lambda ev, sid=session_id: self._broadcast(sid, ev))
            self.runtimes[session_id] = runtime
            self.hub.setdefault(session_id, [])
            return runtime

    def _broadcast(self, session_id: str, event: SessionEvent) -> None:
        with self.lock:
            clients = list(self.hub.get(session_id, ()))
        for client in clients:
            message = event_message(event, session_id, client.role)
            if message is not None:
                client.send(message)

    def attach(self, client: ChannelClient) -> None:
        with self.lock:
            self.hub.setdefault(client.session_id, []).append(client)
            if client.role == "participant":
                timer = self._grace_timers.pop(client.session_id, None)
                if timer is not None:
                    timer.cancel()

    def detach(self, client: ChannelClient) -> None:
        client.stop()
        with self.lock:
            clients = self.hub.get(client.session_id, [])
            if client in clients:
                clients.remove(client)
            if client.role == "participant" \
                    and not any(c.role == "participant" for c in clients):
                self._start_grace_timer(client.session_id)

    def _start_grace_timer(self, session_id: str) -> None:
        # explicit session end when the participant stays gone past the grace
        existing = self._grace_timers.pop(session_id, None)
        if existing is not None:
            existing.cancel()
        timer = threading.Timer(self.disconnect_grace, self._grace_expired, (session_id,))
        timer.daemon = True
        self._grace_timers[session_id] = timer
        timer.start()

    def _grace_expired(self, session_id: str) -> None:
        with self.lock:
            self._grace_timers.pop(session_id, None)
            runtime = self.runtimes.get(session_id)
            if runtime is None:
                return
            if any(c.role == "participant" for c in self.hub.get(session_id, ())):
                return
        try:
            runtime.end_session(reason="participant disconnected")
        except OzwozError:
            logger.debug("grace-period end skipped for %s", session_id)

    # -- channel message handling ---------------------------------------------

    def handle_channel_message(self, client: ChannelClient, runtime: SessionRuntime,
                               raw: str) -> None:
        def reply(mtype: str, payload: dict) -> None:
            client.send({"type": mtype, "session_id": client.session_id,
                         "ts": now_ms(), "payload": payload})

        try:
            message = json.loads(raw)
        except ValueError:
            reply("protocol_error", {"message": "frame is not valid JSON"})
            return
        errors = sorted(_VALIDATOR.iter_errors(message), key=str)
        if errors:
            reply("protocol_error", {"message": f"schema violation: {errors[0].message}"})
            return
        mtype = message["type"]
        if mtype not in ROLE_PERMISSIONS[client.role]:
            reply("protocol_error", {"message": f"role {client.role} may not send {mtype}"})
            return
        payload = message.get("payload", {})
        try:
            if mtype == "hello":
                if client.role == "participant":
                    runtime.participant_ready()
                reply("hello", {"state": runtime.session.state.value, "role": client.role})
            elif mtype == "state_sync":
                view = wizard_view(runtime.session) if client.role == "wizard" \
                    else participant_view(runtime.session)
                reply("state_sync", view)
            elif mtype == "ParticipantInput":
                try:
                    runtime.ingest_participant_input(payload)
                except TurnInFlight:
                    reply("busy", {"message": "the system is still replying"})
            elif mtype == "WizardAction":
                runtime.apply_wizard_action(payload)
            elif mtype == "DeliveryAck":
                runtime.acknowledge_delivery(int(payload["output_seq"]), payload["kind"])
            elif mtype == "Note":
                runtime.add_note(payload["text"], actor=client.role)
            elif mtype == "FilterChange":
                runtime.change_filter(payload["attribute"], payload["allowed_values"])
            elif mtype == "StageSwitch":
                runtime.switch_stage(payload["stage_id"])
            elif mtype == "SessionEnd":
                runtime.end_session(payload.get("reason", "wizard"))
            elif mtype == "Error":
                runtime.report_error(payload["message"], actor=client.role,
                                     **{k: v for k, v in payload.items() if k != "message"})
        except (IllegalAction, NotFound, ValidationError, OzwozError) as exc:
            reply("protocol_error", {"message": str(exc)})


# ---------------------------------------------------------------------------
# HTTP handler


def _make_handler(server: OzwozServer):
    class Handler(BaseHTTPRequestHandler):
        # one route table for the whole REST surface
        def log_message(self, fmt, *args):
            logger.debug("%s - %s", self.address_string(), fmt % args)

        # -- helpers -------------------------------------------------------

        def _json(self, status: int, obj) -> None:
            data = canonical_json(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _bytes(self, status: int, data: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _error(self, status: int, message: str, **extra) -> None:
            self._json(status, {"error": message, **extra})

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length") or 0)
            return self.rfile.read(length) if length else b""

        def _json_body(self) -> dict:
            try:
                return json.loads(self._body().decode("utf-8"))
            except ValueError:
                raise ValidationError("request body is not valid JSON")

        def _dispatch(self, method: str) -> None:
            parsed = urllib.parse.urlsplit(self.path)
            path = parsed.path
            try:
                if not self._route(method, path, parsed.query):
                    self._error(404, f"no route for {method} {path}")
            except NotFound as exc:
                self._error(404, str(exc))
            except InvalidConfig as exc:
                self._error(422, "invalid pipeline", violations=[
                    v if isinstance(v, str) else
                    {"rule": v.rule, "slot": v.slot.value, "message": v.message}
                    for v in exc.violations])
            except ValidationError as exc:
                self._error(422, str(exc))
            except OzwozError as exc:
                self._error(422, str(exc))
            except (ConnectionClosed, BrokenPipeError, ConnectionResetError):
                pass
            except Exception:  # an unexpected bug must not kill the thread silently
                logger.exception("unhandled error on %s %s", method, path)
                try:
                    self._error(500, "internal error")
                except Exception:
                    pass

        # -- routing -------------------------------------------------------

        def _route(self, method: str, path: str, query: str) -> bool:
            if method == "GET":
                if path == "/design-space":
                    self._json(200, [c.to_dict() for c in enumerate_design_space()])
                    return True
                if path == "/experiments":
                    self._json(200, server.store.list_experiments())
                    return True
                m = re.fullmatch(r"/experiments/([^/]+)", path)
                if m:
                    exp = server.store.get_experiment(m.group(1))
                    self._json(200, exp.to_dict())
                    return True
                m = re.fullmatch(r"/sessions/([^/]+)/log", path)
                if m:
                    log_path = server.store.log_path(m.group(1))
                    if not log_path.exists():
                        raise NotFound(f"no log for session {m.group(1)!r}")
                    self._bytes(200, log_path.read_bytes(), "application/x-ndjson")
                    return True
                m = re.fullmatch(r"/assets/([^/]+)", path)
                if m:
                    self._bytes(200, server.store.get_asset(m.group(1)),
                                "application/octet-stream")
                    return True
                if path == "/schema/messages.json":
                    self._json(200, MESSAGE_SCHEMA)
                    return True
                if path == "/channel":
                    self._channel(query)
                    return True
                if path.startswith("/ui/"):
                    self._ui(path)
                    return True
                if path == "/healthz":
                    self._json(200, {"ok": True})
                    return True
                return False

            if method == "POST":
                if path == "/experiments":
                    return self._create_experiment()
                m = re.fullmatch(r"/experiments/([^/]+)/utterances:import", path)
                if m:
                    exp = server.store.get_experiment(m.group(1))
                    count = import_utterances_csv(exp, self._body())
                    exp.revision += 1
                    exp.validate()
                    server.store.put_experiment(exp)
                    self._json(200, {"created": count, "revision": exp.revision})
                    return True
                if path == "/sessions":
                    body = self._json_body()
                    info = server.create_session(body.get("experiment_id", ""))
                    self._json(201, info)
                    return True
                if path == "/assets":
                    asset_id = server.store.put_asset(self._body())
                    self._json(201, {"id": asset_id})
                    return True
                return False

            if method == "PUT":
                m = re.fullmatch(r"/experiments/([^/]+)/pipeline", path)
                if m:
                    exp = server.store.get_experiment(m.group(1))
                    config = PipelineConfig.from_dict(self._json_body())
                    violations = validate(config)
                    if violations:
                        raise InvalidConfig(violations)
                    exp.pipeline = config
                    exp.revision += 1
                    server.store.put_experiment(exp)
                    self._json(200, {"revision": exp.revision})
                    return True
                m = re.fullmatch(r"/experiments/([^/]+)", path)
                if m:
                    return self._replace_experiment(m.group(1))
                return False

            if method == "DELETE":
                m = re.fullmatch(r"/experiments/([^/]+)", path)
                if m:
                    server.store.delete_experiment(m.group(1))
                    self._json(200, {"deleted": m.group(1)})
                    return True
                return False
            return False

        def _create_experiment(self) -> bool:
            body = self._json_body()
            body.setdefault("id", new_id("exp"))
            body.setdefault("stages", [{"id": new_id("stage"), "title": "Stage 1",
                                        "utterance_ids": []}])
            body["revision"] = 1
            exp = Experiment.from_dict(body)
            exp.validate()
            server.store.put_experiment(exp)
            self._json(201, {"id": exp.id, "revision": exp.revision})
            return True

        def _replace_experiment(self, experiment_id: str) -> bool:
            current = server.store.get_experiment(experiment_id)
            body = self._json_body()
            if "revision" not in body:
                raise ValidationError("revision is required on update")
            if int(body["revision"]) != current.revision:
                self._error(409, "revision conflict: document changed since read",
                            current_revision=current.revision)
                return True
            body["id"] = experiment_id
            body["revision"] = current.revision + 1
            exp = Experiment.from_dict(body)
            exp.validate()
            server.store.put_experiment(exp)
            self._json(200, {"id": exp.id, "revision": exp.revision})
            return True

        # -- static UI -------------------------------------------------------

        def _ui(self, path: str) -> None:
            name = path[len("/ui/"):] or "wizard"
            if name in ("wizard", "participant"):
                filename = f"{name}.html"
            else:
                filename = name
            if server.ui_dir is not None:
                target = (server.ui_dir / filename).resolve()
                if server.ui_dir.resolve() in target.parents or target == server.ui_dir.resolve():
                    if target.is_file():
                        ctype = {
                            ".html": "text/html; charset=utf-8",
                            ".js": "text/javascript; charset=utf-8",
                            ".css": "text/css; charset=utf-8",
                            ".map": "application/json",
                        }.get(target.suffix, "application/octet-stream")
                        self._bytes(200, target.read_bytes(), ctype)
                        return
            if name in ("wizard", "participant"):
                placeholder = (
                    f"<!doctype html><meta charset='utf-8'><title>ozwoz {name}</title>"
                    f"<p>The {name} console build is not installed. Build the frontend "
                    f"and start the server with --ui-dir.</p>")
                self._bytes(200, placeholder.encode("utf-8"), "text/html; charset=utf-8")
                return
            self._error(404, f"no UI file {name!r}")

        # -- the real-time channel --------------------------------------------

        def _channel(self, query: str) -> None:
            params = urllib.parse.parse_qs(query)
            token = (params.get("token") or [""])[0]
            entry = server.tokens.get(token)
            if entry is None:
                self._error(403, "invalid or expired token")
                return
            session_id, role = entry
            try:
                runtime = server.ensure_runtime(session_id)
            except NotFound as exc:
                self._error(404, str(exc))
                return
            key = self.headers.get("Sec-WebSocket-Key")
            upgrade = (self.headers.get("Upgrade") or "").lower()
            if upgrade != "websocket" or not key:
                self._error(400, "expected a websocket upgrade")
                return
            self.connection.sendall(server_handshake_response(key))
            conn = WSConnection(self.connection, mask_outgoing=False)
            client = ChannelClient(conn, session_id, role)
            server.attach(client)
            client.send({"type": "hello", "session_id": session_id, "ts": now_ms(),
                         "role": role,
                         "payload": {"state": runtime.session.state.value, "role": role}})
            try:
                self._channel_loop(conn, client, runtime)
            finally:
                server.detach(client)
                conn.close()
                self.close_connection = True

        def _channel_loop(self, conn: WSConnection, client: ChannelClient,
                          runtime: SessionRuntime) -> None:
            unanswered_pings = 0
            while client.alive:
                try:
                    opcode, payload = conn.recv_message(timeout=server.ping_interval,
                                                        auto_pong=True)
                except ReceiveTimeout:
                    if unanswered_pings >= 3:
                        logger.info("closing %s channel: 3 missed pongs", client.role)
                        return
                    try:
                        conn.ping()
                    except ConnectionClosed:
                        return
                    unanswered_pings += 1
                    continue
                except ConnectionClosed:
                    return
                unanswered_pings = 0
                if opcode == OP_PONG:
                    continue
                if opcode == OP_TEXT:
                    server.handle_channel_message(client, runtime,
                                                  payload.decode("utf-8"))

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_PUT(self):
            self._dispatch("PUT")

        def do_DELETE(self):
            self._dispatch("DELETE")

    return Handler
