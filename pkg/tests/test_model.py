import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ozwoz import (
    DomainRecord,
    Experiment,
    FilterSpec,
    MissingBinding,
    NotFound,
    ValidationError,
    filter_records,
    render_template,
    template_slots,
)


def test_create_utterance_appends(experiment):
    before = len(experiment.stage("greeting").utterance_ids)
    uid = experiment.create_utterance("greeting", "New line", "en")
    stage = experiment.stage("greeting")
    assert len(stage.utterance_ids) == before + 1
    assert stage.utterance_ids[-1] == uid


def test_create_utterance_unknown_stage(experiment):
    with pytest.raises(NotFound):
        experiment.create_utterance("missing", "Hi", "en")


def test_create_utterance_empty_text(experiment):
    with pytest.raises(ValidationError):
        experiment.create_utterance("greeting", "   ", "en")


def test_sixteen_utterances_in_insertion_order():
    exp = Experiment(id="e", name="bank")
    exp.add_stage("main", stage_id="main")
    ids = [exp.create_utterance("main", f"Response {i}", "en") for i in range(16)]
    assert exp.stage("main").utterance_ids == ids
    assert [u.text for u in exp.all_utterances()] == [f"Response {i}" for i in range(16)]


def test_move_between_stages(experiment):
    experiment.move_utterance("u-hello", "closing", 0)
    assert experiment.stage("closing").utterance_ids[0] == "u-hello"
    assert "u-hello" not in experiment.stage("greeting").utterance_ids


def test_move_same_position_is_identity(experiment):
    before = [s.to_dict() for s in experiment.stages]
    experiment.move_utterance("u-hello", "greeting", 0)
    assert [s.to_dict() for s in experiment.stages] == before


def test_move_to_end_appends(experiment):
    n = len(experiment.stage("closing").utterance_ids)
    experiment.move_utterance("u-hello", "closing", n)
    assert experiment.stage("closing").utterance_ids[-1] == "u-hello"


def test_move_position_out_of_range(experiment):
    with pytest.raises(ValidationError):
        experiment.move_utterance("u-hello", "closing", 99)


def test_move_unknown_ids(experiment):
    with pytest.raises(NotFound):
        experiment.move_utterance("nope", "closing", 0)
    with pytest.raises(NotFound):
        experiment.move_utterance("u-hello", "nope", 0)


def test_frequently_used_idempotent(experiment):
    experiment.set_frequently_used("u-hello", True)
    experiment.set_frequently_used("u-hello", True)
    assert experiment.frequently_used == ["u-hello"]
    experiment.set_frequently_used("u-bye", False)  # non-member: no-op
    assert experiment.frequently_used == ["u-hello"]


def test_frequently_used_keeps_order(experiment):
    for uid in ("u-hello", "u-moment", "u-bye"):
        experiment.set_frequently_used(uid, True)
    experiment.set_frequently_used("u-moment", False)
    assert experiment.frequently_used == ["u-hello", "u-bye"]


def test_frequently_used_unknown(experiment):
    with pytest.raises(NotFound):
        experiment.set_frequently_used("nope", True)


def test_delete_removes_from_frequently_used(experiment):
    experiment.set_frequently_used("u-hello", True)
    experiment.delete_utterance("u-hello")
    assert "u-hello" not in experiment.frequently_used
    with pytest.raises(NotFound):
        experiment.utterance("u-hello")
    experiment.validate()


@given(st.lists(st.sampled_from(["create", "move", "delete"]), max_size=30),
       st.randoms(use_true_random=False))
def test_single_home_invariant(ops, rng):
    exp = Experiment(id="e", name="p")
    exp.add_stage("a", stage_id="a")
    exp.add_stage("b", stage_id="b")
    counter = 0
    for op in ops:
        uids = [u.id for u in exp.all_utterances()]
        if op == "create" or not uids:
            counter += 1
            exp.create_utterance(rng.choice(["a", "b"]), f"t{counter}", "en")
        elif op == "move":
            target = rng.choice(["a", "b"])
            pos = rng.randint(0, len(exp.stage(target).utterance_ids))
            exp.move_utterance(rng.choice(uids), target, pos)
        else:
            exp.delete_utterance(rng.choice(uids))
        exp.validate()  # single-home + referential integrity after every step
        homes = [s.id for u in exp.all_utterances() for s in exp.stages
                 if u.id in s.utterance_ids]
        assert len(homes) == len(exp.all_utterances())


RECORDS = [
    DomainRecord(id="r1", attributes={"type": "prepaid", "speed": 50}),
    DomainRecord(id="r2", attributes={"type": "landline", "speed": 100}),
    DomainRecord(id="r3", attributes={"type": "prepaid", "speed": 100}),
    DomainRecord(id="r4", attributes={"color": "red"}),
]


def test_filter_no_constraint_returns_all():
    out = filter_records(RECORDS, [FilterSpec("type", set()), FilterSpec("speed", set())])
    assert out == RECORDS


def test_filter_membership():
    out = filter_records(RECORDS, [FilterSpec("type", {"prepaid"})])
    assert [r.id for r in out] == ["r1", "r3"]


def test_filter_conjunction_to_empty():
    out = filter_records(
        [RECORDS[0], RECORDS[1]],
        [FilterSpec("type", {"prepaid"}), FilterSpec("speed", {100})])
    assert out == []


def test_filter_missing_attribute_excluded():
    out = filter_records(RECORDS, [FilterSpec("type", {"prepaid", "landline"})])
    assert all(r.id != "r4" for r in out)


@given(st.data())
def test_filter_monotonicity(data):
    values = st.sampled_from(["a", "b", "c", "d"])
    records = [DomainRecord(id=f"r{i}", attributes={"x": data.draw(values), "y": data.draw(values)})
               for i in range(8)]
    # non-empty: an empty allowed set means "no constraint", so growing it
    # from empty flips the filter on and may legitimately shrink the result
    allowed = set(data.draw(st.lists(values, min_size=1, max_size=3)))
    base = filter_records(records, [FilterSpec("x", set(allowed))])
    # widening a filter's allowed set never shrinks the result
    wider = filter_records(records, [FilterSpec("x", allowed | {data.draw(values)})])
    assert {r.id for r in base} <= {r.id for r in wider}
    # adding a new non-empty filter never grows it
    narrowed = filter_records(records, [FilterSpec("x", set(allowed)),
                                        FilterSpec("y", {data.draw(values)})])
    assert {r.id for r in narrowed} <= {r.id for r in base}


def test_render_single_slot():
    assert render_template("You mispronounced {word}.", {"word": "through"}) \
        == "You mispronounced through."


def test_render_identity_without_slots():
    assert render_template("No slots here.", {}) == "No slots here."
    assert render_template("No slots here.", {"x": "y"}) == "No slots here."


def test_render_missing_binding():
    with pytest.raises(MissingBinding) as err:
        render_template("Stress the {nth} syllable of {word}", {"nth": "second"})
    assert err.value.name == "word"


def test_render_brace_escape():
    assert render_template("literal {{brace}} and {x}", {"x": "42"}) == "literal {brace} and 42"


@pytest.mark.parametrize("bad", ["open {", "close }", "{bad name}", "{}", "{a-b}"])
def test_render_malformed(bad):
    with pytest.raises(ValidationError):
        render_template(bad, {})


def test_template_slots_order():
    assert template_slots("{b} then {a} then {b}") == ["b", "a"]


@given(st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=60),
       st.dictionaries(st.sampled_from(["a", "b"]), st.text(max_size=5), max_size=2))
def test_render_no_slots_identity_property(text, bindings):
    assert render_template(text, bindings) == text


def test_canonical_json_round_trip(experiment):
    doc = experiment.to_canonical_json()
    assert "\n" not in doc and ": " not in doc
    again = Experiment.from_dict(json.loads(doc))
    assert again.to_canonical_json() == doc


def test_snapshot_is_isolated(experiment):
    snap = experiment.snapshot()
    experiment.create_utterance("greeting", "Another", "en")
    experiment.set_frequently_used("u-bye", True)
    assert len(snap.all_utterances()) == 3
    assert snap.frequently_used == []
