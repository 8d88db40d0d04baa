import math
import random

import pytest

from ozwoz import (
    NoData,
    TurnRecord,
    ValidationError,
    consistency,
    extract_turns,
    latency_stats,
    session_report,
    start_session,
    sus_score,
    turns_to_csv,
    utterance_spread,
)
from ozwoz.analysis import CSV_COLUMNS, normalize_text


def turn(output_seq=10, output_ts=2000, output_text="ok", **kwargs):
    return TurnRecord(output_seq=output_seq, output_ts=output_ts,
                      output_text=output_text, **kwargs)


def scripted_session(experiment, script):
    experiment.chat_enabled = True
    runtime = start_session(experiment)
    runtime.participant_ready()
    for text, reply, utterance_id in script:
        runtime.ingest_participant_input({"kind": "text", "text": text})
        if utterance_id:
            runtime.apply_wizard_action({"kind": "SelectUtterance",
                                         "utterance_id": utterance_id})
        else:
            runtime.apply_wizard_action({"kind": "FreeText", "text": reply})
        runtime.acknowledge_delivery(runtime.session.events[-1].seq, "Displayed")
    return runtime


def test_extract_turns_links_single_turn(experiment):
    runtime = scripted_session(experiment, [("hi", None, "u-hello")])
    turns = extract_turns(runtime.session.events)
    assert len(turns) == 1
    t = turns[0]
    assert t.input_text == "hi"
    assert t.utterance_id == "u-hello"
    assert t.input_seq is not None and t.wizard_action_seq is not None
    assert t.ack_ts is not None
    assert t.input_ts <= t.wizard_action_ts <= t.output_ts <= t.ack_ts


def test_extract_turns_wizard_initiated(experiment):
    experiment.chat_enabled = True
    runtime = start_session(experiment)
    runtime.participant_ready()
    runtime.apply_wizard_action({"kind": "FreeText", "text": "are you still there?"})
    turns = extract_turns(runtime.session.events)
    assert len(turns) == 1
    assert turns[0].input_seq is None and turns[0].input_text is None
    assert turns[0].output_text == "are you still there?"


def test_extract_turns_three_in_order(experiment):
    runtime = scripted_session(experiment, [
        ("a", "ra", None), ("b", "rb", None), ("c", "rc", None)])
    turns = extract_turns(runtime.session.events)
    assert [t.output_text for t in turns] == ["ra", "rb", "rc"]
    assert [t.input_text for t in turns] == ["a", "b", "c"]


def test_latency_single_value():
    stats = latency_stats([turn(input_ts=1000, output_ts=2000)])
    assert stats == {"mean": 1000, "median": 1000, "p95": 1000, "max": 1000}


def test_latency_two_values():
    stats = latency_stats([turn(input_ts=0, output_ts=1000),
                           turn(input_ts=0, output_ts=3000)])
    assert stats["mean"] == 2000 and stats["median"] == 2000 and stats["max"] == 3000


def brute_force_stats(latencies):
    """Independent spreadsheet-style oracle: sort, interpolate ranks by hand."""
    xs = sorted(latencies)
    n = len(xs)
    mean = sum(xs) / n
    if n % 2:
        median = xs[n // 2]
    else:
        median = (xs[n // 2 - 1] + xs[n // 2]) / 2
    rank = 0.95 * (n - 1)
    below = int(rank)
    p95 = xs[below] + (rank - below) * (xs[min(below + 1, n - 1)] - xs[below])
    return mean, median, p95, max(xs)


def test_latency_twenty_turn_fixture():
    rng = random.Random(7)
    latencies = [rng.randint(200, 9000) for _ in range(20)]
    turns = [turn(output_seq=i, input_ts=0, output_ts=lat)
             for i, lat in enumerate(latencies)]
    mean, median, p95, mx = brute_force_stats(latencies)
    stats = latency_stats(turns)
    assert stats["mean"] == pytest.approx(mean)
    assert stats["median"] == pytest.approx(median)
    assert stats["p95"] == pytest.approx(p95)
    assert stats["max"] == mx


def test_latency_excludes_turns_without_timestamps():
    stats = latency_stats([turn(input_ts=0, output_ts=500), turn(input_ts=None)])
    assert stats["max"] == 500


def test_latency_no_data():
    with pytest.raises(NoData):
        latency_stats([turn(input_ts=None)])


def test_spread_degenerate():
    turns = [turn(output_seq=i, utterance_id="u1") for i in range(5)]
    assert utterance_spread(turns) == 0.0


def test_spread_uniform():
    turns = [turn(output_seq=i, utterance_id=f"u{i}") for i in range(4)]
    assert utterance_spread(turns) == pytest.approx(1.0)


def test_spread_mixed_counts():
    # counts [2,1,1]: H = 1.5 bits, H/log2(3) = 0.94639...
    ids = ["a", "a", "b", "c"]
    turns = [turn(output_seq=i, utterance_id=u) for i, u in enumerate(ids)]
    assert utterance_spread(turns) == pytest.approx(1.5 / math.log2(3), abs=1e-9)


def test_spread_permutation_and_relabel_invariant():
    rng = random.Random(3)
    ids = ["a"] * 3 + ["b"] * 2 + ["c"]
    base = utterance_spread([turn(output_seq=i, utterance_id=u)
                             for i, u in enumerate(ids)])
    rng.shuffle(ids)
    shuffled = utterance_spread([turn(output_seq=i, utterance_id=u)
                                 for i, u in enumerate(ids)])
    relabeled = utterance_spread([turn(output_seq=i, utterance_id=u.upper())
                                  for i, u in enumerate(ids)])
    assert base == shuffled == relabeled


def test_spread_no_data():
    with pytest.raises(NoData):
        utterance_spread([turn()])


def consistency_turns(pairs):
    return [turn(output_seq=i, output_text=out, input_text=inp,
                 input_text_normalized=normalize_text(inp))
            for i, (inp, out) in enumerate(pairs)]


def test_consistency_perfect():
    turns = consistency_turns([("hi", "hello"), ("hi", "hello")])
    assert consistency(turns) == 1.0


def test_consistency_half():
    turns = consistency_turns([("hi", "hello"), ("hi", "welcome")])
    assert consistency(turns) == 0.5


def test_consistency_mean_over_groups():
    turns = consistency_turns([
        ("A", "x"), ("A", "x"), ("A", "y"),
        ("B", "z"), ("B", "z"),
    ])
    assert consistency(turns) == pytest.approx(5 / 6)


def test_consistency_normalization_invariance():
    turns = consistency_turns([("  Hi THERE. ", "hello"), ("hi   there", "hello")])
    assert consistency(turns) == 1.0


def test_consistency_no_repeats():
    with pytest.raises(NoData):
        consistency(consistency_turns([("a", "x"), ("b", "y")]))


def test_sus_extremes():
    assert sus_score([7, 1, 7, 1, 7, 1, 7, 1, 7, 1]) == 100.0
    assert sus_score([1, 7, 1, 7, 1, 7, 1, 7, 1, 7]) == 0.0


def test_sus_neutral_midpoint():
    assert sus_score([4] * 10) == pytest.approx(50.0)


def test_sus_mirror_identity():
    rng = random.Random(5)
    for _ in range(1000):
        r = [rng.randint(1, 7) for _ in range(10)]
        mirrored = [8 - x for x in r]
        assert sus_score(r) + sus_score(mirrored) == pytest.approx(100.0, abs=1e-9)


@pytest.mark.parametrize("bad", [
    [4] * 9, [4] * 11, [0] + [4] * 9, [8] + [4] * 9, [4.5] + [4] * 9,
])
def test_sus_validation(bad):
    with pytest.raises(ValidationError):
        sus_score(bad)


def test_csv_header_and_rows(experiment):
    runtime = scripted_session(experiment, [("hi", None, "u-hello")])
    out = turns_to_csv(extract_turns(runtime.session.events))
    lines = out.strip().split("\n")
    assert lines[0] == CSV_COLUMNS
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert cells[4] == "u-hello"
    assert cells[5] == "hi"


def test_session_report_shape(experiment):
    runtime = scripted_session(experiment, [("hi", None, "u-hello")])
    report = session_report(extract_turns(runtime.session.events))
    assert report["n_turns"] == 1
    assert report["latency"] is not None
    assert report["spread"] == 0.0
    assert report["consistency"] is None  # no repeated inputs
