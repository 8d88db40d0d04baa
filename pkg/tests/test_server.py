import json
import time
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from ozwoz import Experiment, PipelineConfig, ValidationError
from ozwoz.server import (
    OzwozServer,
    event_message,
    import_utterances_csv,
    participant_view,
    wizard_view,
)
from ozwoz.session import SessionEvent, EventType
from ozwoz.wire import ConnectionClosed, OP_PING, ReceiveTimeout, WSClient


@pytest.fixture
def server(tmp_path):
    srv = OzwozServer(tmp_path / "data", port=0, ping_interval=30.0)
    srv.start_background()
    yield srv
    srv.shutdown()


def request(server, method, path, body=None, headers=None):
    url = f"http://127.0.0.1:{server.port}{path}"
    data = None
    if body is not None:
        data = body if isinstance(body, bytes) else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method=method,
                                 headers=headers or {"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as err:
        payload = err.read()
        return err.code, json.loads(payload) if payload else {}


def make_experiment_body(chat=True):
    exp = Experiment(id="exp-1", name="demo", chat_enabled=chat)
    exp.add_stage("greeting", stage_id="greeting")
    exp.create_utterance("greeting", "Hello!", "en", utterance_id="u-hello")
    exp.pipeline = PipelineConfig.build(text_in="BlackBox", dm="Simulating",
                                        text_out="BlackBox")
    return exp.to_dict()


def create_demo_experiment(server):
    status, body = request(server, "POST", "/experiments", make_experiment_body())
    assert status == 201
    return body["id"]


def test_experiment_crud_cycle(server):
    exp_id = create_demo_experiment(server)
    status, doc = request(server, "GET", f"/experiments/{exp_id}")
    assert status == 200 and doc["name"] == "demo" and doc["revision"] == 1

    doc["name"] = "renamed"
    status, body = request(server, "PUT", f"/experiments/{exp_id}", doc)
    assert status == 200 and body["revision"] == 2

    # stale write loses: the revision counter guards against lost updates
    doc["name"] = "stale"
    status, body = request(server, "PUT", f"/experiments/{exp_id}", doc)
    assert status == 409 and body["current_revision"] == 2

    status, _ = request(server, "DELETE", f"/experiments/{exp_id}")
    assert status == 200
    status, _ = request(server, "GET", f"/experiments/{exp_id}")
    assert status == 404


def test_create_minimal_experiment(server):
    status, body = request(server, "POST", "/experiments", {"name": "sketch"})
    assert status == 201
    status, doc = request(server, "GET", f"/experiments/{body['id']}")
    assert status == 200 and len(doc["stages"]) == 1  # a default stage satisfies invariants


def test_put_pipeline_validates(server):
    exp_id = create_demo_experiment(server)
    bad = PipelineConfig.build(asr="Simulating", dm="Correcting", text_out="BlackBox")
    status, body = request(server, "PUT", f"/experiments/{exp_id}/pipeline", bad.to_dict())
    assert status == 422
    assert any(v["rule"] == "R5" and v["slot"] == "DM" for v in body["violations"])
    good = PipelineConfig.build(asr="Simulating", dm="Simulating", text_out="BlackBox")
    status, body = request(server, "PUT", f"/experiments/{exp_id}/pipeline", good.to_dict())
    assert status == 200 and body["revision"] == 2


def test_design_space_route(server):
    status, rows = request(server, "GET", "/design-space")
    assert status == 200 and len(rows) == 16
    assert rows[0]["example"] == "Natural-Language Interfaces"


def test_asset_store_round_trip(server):
    status, body = request(server, "POST", "/assets", b"fake-audio-bytes",
                           headers={"Content-Type": "application/octet-stream"})
    assert status == 201
    url = f"http://127.0.0.1:{server.port}/assets/{body['id']}"
    with urllib.request.urlopen(url) as resp:
        assert resp.read() == b"fake-audio-bytes"
    status, _ = request(server, "GET", "/assets/deadbeef")
    assert status == 404


CSV_OK = (
    "stage,text,language,frequently_used\n"
    + "".join(f"greeting,Utterance {i},en,false\n" for i in range(8))
    + "".join(f"extras,Extra {i},en,true\n" for i in range(8))
)


def test_csv_import_sixteen_rows(server):
    exp_id = create_demo_experiment(server)
    status, body = request(server, "POST", f"/experiments/{exp_id}/utterances:import",
                           CSV_OK.encode(), headers={"Content-Type": "text/csv"})
    assert status == 200 and body["created"] == 16
    _, doc = request(server, "GET", f"/experiments/{exp_id}")
    titles = [s["title"] for s in doc["stages"]]
    assert "extras" in titles  # unknown stage names are created on the fly
    assert len(doc["frequently_used"]) == 8
    total = sum(len(s["utterance_ids"]) for s in doc["stages"])
    assert total == 16 + 1  # the pre-existing utterance stays


def test_csv_import_header_only(server):
    exp_id = create_demo_experiment(server)
    status, body = request(server, "POST", f"/experiments/{exp_id}/utterances:import",
                           b"stage,text,language,frequently_used\n")
    assert status == 200 and body["created"] == 0


def test_csv_import_is_all_or_nothing(server):
    exp_id = create_demo_experiment(server)
    bad = "stage,text,language,frequently_used\ngreeting,ok,en,false\ngreeting,,en,false\n"
    status, _ = request(server, "POST", f"/experiments/{exp_id}/utterances:import",
                        bad.encode())
    assert status == 422
    _, doc = request(server, "GET", f"/experiments/{exp_id}")
    total = sum(len(s["utterance_ids"]) for s in doc["stages"])
    assert total == 1  # nothing from the failed import persisted


def test_csv_import_rejects_wrong_header():
    exp = Experiment.from_dict(make_experiment_body())
    with pytest.raises(ValidationError):
        import_utterances_csv(exp, b"stage,text,lang,frequently_used\n")


def make_session(server):
    exp_id = create_demo_experiment(server)
    status, info = request(server, "POST", "/sessions", {"experiment_id": exp_id})
    assert status == 201
    return info


def ws(server, token, **kwargs):
    return WSClient.connect(f"ws://127.0.0.1:{server.port}/channel?token={token}", **kwargs)


def recv_until(client, mtype, timeout=5.0):
    deadline = time.time() + timeout
    seen = []
    while time.time() < deadline:
        msg = client.recv_json(timeout=deadline - time.time())
        seen.append(msg["type"])
        if msg["type"] == mtype:
            return msg
    raise AssertionError(f"never saw {mtype}; got {seen}")


def test_session_requires_valid_pipeline(server):
    body = make_experiment_body()
    body["pipeline"] = PipelineConfig.build(
        asr="Simulating", dm="Correcting", text_out="BlackBox").to_dict()
    status, created = request(server, "POST", "/experiments", body)
    assert status == 201
    status, resp = request(server, "POST", "/sessions", {"experiment_id": created["id"]})
    assert status == 422


def test_session_unknown_experiment(server):
    status, _ = request(server, "POST", "/sessions", {"experiment_id": "nope"})
    assert status == 404


def test_channel_full_turn(server):
    info = make_session(server)
    wizard = ws(server, info["wizard_token"])
    participant = ws(server, info["participant_token"])
    assert wizard.recv_json()["type"] == "hello"
    assert participant.recv_json()["type"] == "hello"

    # participant ready notification reaches the wizard
    participant.send_json({"type": "hello", "client_ts": 1})
    assert recv_until(wizard, "ParticipantReady")["actor"] == "participant"
    assert recv_until(participant, "hello")["payload"]["state"] == "ParticipantReady"

    participant.send_json({"type": "ParticipantInput", "client_ts": 2,
                           "payload": {"kind": "text", "text": "hi there"}})
    shown = recv_until(wizard, "WizardShown")
    assert shown["payload"]["task"]["kind"] == "Simulate"

    wizard.send_json({"type": "WizardAction", "client_ts": 3,
                      "payload": {"kind": "SelectUtterance", "utterance_id": "u-hello"}})
    out_w = recv_until(wizard, "SystemOutput")
    out_p = recv_until(participant, "SystemOutput")
    assert out_p["payload"]["text"] == "Hello!"
    assert out_p["seq"] == out_w["seq"]

    participant.send_json({"type": "DeliveryAck", "client_ts": 4,
                           "payload": {"output_seq": out_p["seq"], "kind": "Displayed"}})
    ack = recv_until(wizard, "DeliveryAck")
    assert ack["payload"]["kind"] == "Displayed"
    wizard.close()
    participant.close()


def test_channel_busy_and_role_gates(server):
    info = make_session(server)
    wizard = ws(server, info["wizard_token"])
    participant = ws(server, info["participant_token"])
    wizard.recv_json(), participant.recv_json()
    participant.send_json({"type": "hello"})
    recv_until(participant, "hello")
    participant.send_json({"type": "ParticipantInput",
                           "payload": {"kind": "text", "text": "one"}})
    recv_until(wizard, "WizardShown")
    # second input while the turn is pending: busy at the protocol level
    participant.send_json({"type": "ParticipantInput",
                           "payload": {"kind": "text", "text": "two"}})
    assert recv_until(participant, "busy")

    # participants cannot send wizard actions
    participant.send_json({"type": "WizardAction",
                           "payload": {"kind": "FreeText", "text": "hax"}})
    err = recv_until(participant, "protocol_error")
    assert "may not send" in err["payload"]["message"]

    # schema violations keep the connection open
    participant.send_json({"type": "DeliveryAck", "payload": {"output_seq": "x"}})
    assert recv_until(participant, "protocol_error")
    participant.send_json({"type": "state_sync"})
    assert recv_until(participant, "state_sync")
    wizard.close()
    participant.close()


def test_invalid_token_rejected(server):
    with pytest.raises(ConnectionClosed):
        ws(server, "bogus-token")


def test_wizard_reconnect_resyncs_from_replay(server):
    info = make_session(server)
    wizard = ws(server, info["wizard_token"])
    participant = ws(server, info["participant_token"])
    wizard.recv_json(), participant.recv_json()
    participant.send_json({"type": "hello"})
    participant.send_json({"type": "ParticipantInput",
                           "payload": {"kind": "text", "text": "still there?"}})
    recv_until(wizard, "WizardShown")
    wizard.close()

    again = ws(server, info["wizard_token"])
    again.recv_json()
    again.send_json({"type": "state_sync"})
    view = recv_until(again, "state_sync")["payload"]
    assert view["pending"] is not None
    assert view["pending"]["input_text"] == "still there?"
    assert [h["text"] for h in view["history"] if h["direction"] == "in"] == ["still there?"]
    # the runtime survives even if the server forgot it (fresh replay path)
    server.runtimes.clear()
    fresh = ws(server, info["wizard_token"])
    fresh.recv_json()
    fresh.send_json({"type": "state_sync"})
    view2 = recv_until(fresh, "state_sync")["payload"]
    assert view2["pending"] is not None
    again.close(), fresh.close(), participant.close()


def test_session_log_route_is_ordered_ndjson(server):
    info = make_session(server)
    participant = ws(server, info["participant_token"])
    wizard = ws(server, info["wizard_token"])
    participant.recv_json(), wizard.recv_json()
    participant.send_json({"type": "hello"})
    participant.send_json({"type": "ParticipantInput",
                           "payload": {"kind": "text", "text": "hi"}})
    recv_until(wizard, "WizardShown")
    wizard.send_json({"type": "WizardAction",
                      "payload": {"kind": "FreeText", "text": "welcome"}})
    recv_until(participant, "SystemOutput")
    url = f"http://127.0.0.1:{server.port}/sessions/{info['session_id']}/log"
    with urllib.request.urlopen(url) as resp:
        lines = [json.loads(l) for l in resp.read().decode().strip().split("\n")]
    assert [e["seq"] for e in lines] == list(range(len(lines)))
    assert lines[0]["type"] == "SessionStart"
    participant.close(), wizard.close()


def test_heartbeat_closes_after_missed_pongs(tmp_path):
    srv = OzwozServer(tmp_path / "hb", port=0, ping_interval=0.15)
    srv.start_background()
    try:
        status, body = request(srv, "POST", "/experiments", make_experiment_body())
        _, info = request(srv, "POST", "/sessions", {"experiment_id": body["id"]})
        mute = ws(srv, info["participant_token"], auto_pong=False)
        assert mute.recv_json()["type"] == "hello"
        pings = 0
        closed_at = None
        start = time.time()
        while time.time() - start < 5:
            try:
                opcode, _ = mute.conn.recv_message(timeout=1.0, auto_pong=False)
            except ConnectionClosed:
                closed_at = time.time() - start
                break
            except ReceiveTimeout:
                continue
            if opcode == OP_PING:
                pings += 1
        assert closed_at is not None, "server never closed a silent connection"
        assert pings >= 3  # it pinged, got no pongs, then hung up
    finally:
        srv.shutdown()


DENYLIST = {
    "utterances", "stages", "frequently_used", "domain_records", "filters",
    "notes", "candidates", "editable_text", "task", "tasks", "pending",
    "history", "input_text", "adapter_id", "wizard_token", "instructions",
}


def all_keys(obj):
    keys = set()
    if isinstance(obj, dict):
        for k, v in obj.items():
            keys.add(k)
            keys |= all_keys(v)
    elif isinstance(obj, list):
        for v in obj:
            keys |= all_keys(v)
    return keys


def test_participant_messages_never_leak_wizard_fields(experiment):
    from ozwoz import start_session
    experiment.chat_enabled = True
    runtime = start_session(experiment)
    runtime.participant_ready()
    runtime.ingest_participant_input({"kind": "text", "text": "hi"})
    runtime.apply_wizard_action({"kind": "SelectUtterance", "utterance_id": "u-hello"})
    runtime.add_note("secret instructions")
    runtime.acknowledge_delivery(
        next(e.seq for e in runtime.session.events if e.type is EventType.SYSTEM_OUTPUT),
        "Displayed")
    runtime.change_filter("type", ["prepaid"])
    runtime.switch_stage("closing")
    runtime.end_session()

    leaked = set()
    for event in runtime.session.events:
        msg = event_message(event, runtime.session.id, "participant")
        if msg is not None:
            leaked |= all_keys(msg)
        # every event reaches the wizard copy without loss
        assert event_message(event, runtime.session.id, "wizard")["payload"] == event.payload
    leaked |= all_keys(participant_view(runtime.session))
    assert leaked & DENYLIST == set()
    # sanity: the wizard view genuinely contains the sensitive fields
    assert all_keys(wizard_view(runtime.session)) & DENYLIST


def test_participant_disconnect_grace_ends_session(tmp_path):
    srv = OzwozServer(tmp_path / "grace", port=0, ping_interval=30.0,
                      disconnect_grace=0.3)
    srv.start_background()
    try:
        _, body = request(srv, "POST", "/experiments", make_experiment_body())
        _, info = request(srv, "POST", "/sessions", {"experiment_id": body["id"]})
        wizard = ws(srv, info["wizard_token"])
        wizard.recv_json()

        # reconnect inside the grace period keeps the session alive
        participant = ws(srv, info["participant_token"])
        participant.recv_json()
        participant.send_json({"type": "hello"})
        recv_until(wizard, "ParticipantReady")
        participant.close()
        time.sleep(0.1)
        participant = ws(srv, info["participant_token"])
        participant.recv_json()
        time.sleep(0.5)
        runtime = srv.ensure_runtime(info["session_id"])
        assert runtime.session.state.value != "Ended"

        # staying gone past the grace ends the session explicitly
        participant.close()
        ended = recv_until(wizard, "SessionEnd", timeout=5)
        assert ended["payload"]["reason"] == "participant disconnected"
        wizard.close()
    finally:
        srv.shutdown()


def test_root_schema_file_matches_package_copy():
    # the repo-root schema file is the cross-component contract; it must be
    # byte-identical to what the installed server actually enforces
    root_schema = Path(__file__).parent.parent / "schema" / "messages.json"
    from ozwoz.server import MESSAGE_SCHEMA
    assert json.loads(root_schema.read_text(encoding="utf-8")) == MESSAGE_SCHEMA


def test_participant_view_shows_outputs_only(experiment):
    from ozwoz import start_session
    experiment.chat_enabled = True
    runtime = start_session(experiment)
    runtime.participant_ready()
    runtime.ingest_participant_input({"kind": "text", "text": "hi"})
    runtime.apply_wizard_action({"kind": "FreeText", "text": "welcome"})
    view = participant_view(runtime.session)
    assert [o["text"] for o in view["outputs"]] == ["welcome"]
    assert view["busy"] is False
