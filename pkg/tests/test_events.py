from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import human_world
from lifeevents.errors import (
    CausalCycle, DuplicateEvent, InvalidRecognitionRule, TemporalInversion, TimestampRegression,
    UnknownEvent, UnknownRegister, UnknownSubject,
)
from lifeevents.events import (
    DataEvent, Effect, EventLog, EventStore, RecognitionRule, naive_recognize, recognize,
)
from lifeevents.ontology import Category, empty_state

BIRTH = RecognitionRule("birth_of_child", ("pregnancy_registered", "birth_registered"), 300)
PREGNANCY = RecognitionRule("pregnancy", ("pregnancy_registered",))


def _store():
    w = human_world()
    mary = w.register_entity(Category.PHYSICAL_AGENT, "Human", "Female", hint="mary")
    john = w.register_entity(Category.PHYSICAL_AGENT, "Human", "Male", hint="john")
    child = w.register_entity(Category.PHYSICAL_AGENT, "Human", "Female", hint="child")
    return EventStore(w, ["population", "health"]), mary, john, child


def _ingest_all(store, events, rules=(PREGNANCY, BIRTH)):
    """Ingest one event at a time and record newly recognized life events, as a run does."""
    for e in events:
        store.ingest(e)
        for le in recognize(store.log, rules):
            if le.id not in store.life_events:
                store.record_life_event(le)


def test_birth_registered_grows_log_and_register():
    store, mary, _, child = _store()
    pos = store.ingest(DataEvent("d1", "birth_registered", 5, child, "population",
                                 {"born": True, "mother": mary}))
    assert pos == 0 and len(store.log) == 1
    assert store.registers["population"].get(child, "mother") == mary
    assert store.world.entity(child).attributes["born"] is True


def test_timestamp_regression():
    store, mary, _, _ = _store()
    store.ingest(DataEvent("d1", "x", 10, mary, "population", {"a": 1}))
    with pytest.raises(TimestampRegression):
        store.ingest(DataEvent("d2", "x", 9, mary, "population", {"a": 2}))


def test_equal_timestamps_keep_submission_order():
    store, mary, john, _ = _store()
    a = store.ingest(DataEvent("d1", "x", 10, mary, "population", {"a": 1}))
    b = store.ingest(DataEvent("d2", "x", 10, john, "population", {"a": 1}))
    assert b == a + 1
    assert store.log.state(a + 1).instant < store.log.state(b + 1).instant


def test_ingest_validation():
    store, mary, _, _ = _store()
    with pytest.raises(UnknownSubject):
        store.ingest(DataEvent("d1", "x", 1, "nobody#0", "population"))
    with pytest.raises(UnknownSubject):
        store.ingest(DataEvent("d1", "x", 1, mary, "population", co_subjects=("nobody#0",)))
    with pytest.raises(UnknownRegister):
        store.ingest(DataEvent("d1", "x", 1, mary, "tax"))
    store.ingest(DataEvent("d1", "x", 1, mary, "population", {"a": 1}))
    with pytest.raises(DuplicateEvent):
        store.ingest(DataEvent("d1", "x", 2, mary, "population", {"a": 2}))


def test_effect_names_are_checked():
    with pytest.raises(ValueError):
        Effect("teleport", "Mars")


def test_pregnancy_then_birth_is_a_complex_caused_life_event():
    store, mary, _, child = _store()
    _ingest_all(store, [
        DataEvent("d1", "pregnancy_registered", 10, mary, "health", {"pregnant": True}),
        DataEvent("d2", "birth_registered", 200, mary, "population", {"children": 1},
                  co_subjects=(child,), effects=(Effect("relator", "motherhood"),)),
    ])
    events = sorted(store.life_events.values(), key=lambda e: e.timestamp)
    pregnancy, birth = events
    assert pregnancy.is_atomic and not birth.is_atomic
    assert birth.constituents == ("d1", "d2")
    assert birth.caused_by == {pregnancy.id}


def test_window_bounds_sequence_patterns():
    store, mary, _, _ = _store()
    _ingest_all(store, [
        DataEvent("d1", "pregnancy_registered", 10, mary, "health", {"pregnant": True}),
        DataEvent("d2", "birth_registered", 400, mary, "population", {"children": 1}),
    ])
    assert [e.life_event_type for e in store.life_events.values()] == ["pregnancy"]


def test_recognition_rules_are_validated():
    with pytest.raises(InvalidRecognitionRule):
        RecognitionRule("x", ())
    with pytest.raises(InvalidRecognitionRule):
        RecognitionRule("x", ("a", "b"))


def test_empty_log_recognizes_nothing():
    assert recognize(EventLog(empty_state()), [BIRTH, PREGNANCY]) == []


def test_overlapping_candidates_earliest_match_consumes():
    store, mary, _, _ = _store()
    for i, (kind, t) in enumerate([("pregnancy_registered", 1), ("pregnancy_registered", 2),
                                   ("birth_registered", 3), ("birth_registered", 4)]):
        store.ingest(DataEvent(f"d{i}", kind, t, mary, "health", {"n": i}))
    found = recognize(store.log, [BIRTH])
    assert [e.constituents for e in found] == [("d0", "d2")]
    assert recognize(store.log, [BIRTH]) == found == naive_recognize(store.log, [BIRTH])


def test_events_that_change_nothing_are_not_life_events():
    store, mary, _, _ = _store()
    store.ingest(DataEvent("d1", "pregnancy_registered", 1, mary, "health", {"pregnant": True}))
    store.ingest(DataEvent("d2", "pregnancy_registered", 2, mary, "health", {"pregnant": True}))
    assert [e.constituents for e in recognize(store.log, [PREGNANCY])] == [("d1",)]


def test_link_cause_and_cycles():
    store, mary, _, child = _store()
    _ingest_all(store, [
        DataEvent("d1", "pregnancy_registered", 10, mary, "health", {"pregnant": True}),
        DataEvent("d2", "birth_registered", 200, mary, "population", {"children": 1}),
    ])
    preg, birth = sorted(store.life_events, key=lambda k: store.life_events[k].timestamp)
    store.link_cause(preg, birth)
    with pytest.raises(CausalCycle):
        store.link_cause(preg, preg)
    with pytest.raises(CausalCycle):
        store.link_cause(birth, preg)
    with pytest.raises(UnknownEvent):
        store.link_cause(preg, "nope")


def test_cause_may_not_follow_effect():
    store, mary, john, _ = _store()
    _ingest_all(store, [
        DataEvent("d1", "pregnancy_registered", 10, mary, "health", {"pregnant": True}),
        DataEvent("d2", "pregnancy_registered", 50, john, "health", {"pregnant": True}),
    ], [PREGNANCY])
    early, late = sorted(store.life_events, key=lambda k: store.life_events[k].timestamp)
    with pytest.raises(TemporalInversion):
        store.link_cause(late, early)


def _reaches(graph, start, target):
    stack, seen = [start], set()
    while stack:
        node = stack.pop()
        if node == target:
            return True
        if node not in seen:
            seen.add(node)
            stack.extend(graph.get(node, ()))
    return False


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=25))
def test_causal_links_never_close_a_cycle(pairs):
    """Reference: depth-first reachability over the accepted links."""
    store, mary, _, _ = _store()
    for i in range(6):
        store.ingest(DataEvent(f"d{i}", "pregnancy_registered", 10, mary, "health", {"n": i}))
    ids = [le.id for le in recognize(store.log, [PREGNANCY])]
    for le in recognize(store.log, [PREGNANCY]):
        store.record_life_event(le)
    graph: dict[str, set] = {}
    for a, b in pairs:
        cause, effect = ids[a], ids[b]
        expect_cycle = cause == effect or _reaches(graph, cause, effect)
        try:
            store.link_cause(cause, effect)
            assert not expect_cycle
            graph.setdefault(effect, set()).add(cause)
        except CausalCycle:
            assert expect_cycle


def test_marriage_states_are_separated():
    store, mary, john, _ = _store()
    store.ingest(DataEvent("d1", "marriage_registered", 10, mary, "population", {"married": True},
                           co_subjects=(john,), effects=(Effect("relator", "marriage"),)))
    (le,) = recognize(store.log, [RecognitionRule("married", ("marriage_registered",))])
    store.record_life_event(le)
    before, after = store.separated_states(le.id)
    assert not [m for m in before.moments if m.name == "marriage"]
    assert [m.bearers for m in after.moments if m.name == "marriage"] == [(mary, john)]
    with pytest.raises(UnknownEvent):
        store.separated_states("nope")


# -- differential: greedy engine vs exhaustive oracle --------------------------

def _random_log(rng: random.Random):
    w = human_world()
    people = [w.register_entity(Category.PHYSICAL_AGENT, "Human") for _ in range(3)]
    store = EventStore(w, ["r"])
    t = 0
    for i in range(rng.randint(0, 14)):
        t += rng.choice((0, 0, 1, 5, 20))
        store.ingest(DataEvent(f"d{i}", rng.choice("abc"), t, rng.choice(people), "r",
                               {"v": rng.randint(0, 2)}))
    return store


def _random_rules(rng: random.Random):
    rules = []
    for i in range(rng.randint(1, 4)):
        pattern = tuple(rng.choice("abc") for _ in range(rng.randint(1, 3)))
        window = rng.randint(1, 40) if len(pattern) > 1 or rng.random() < 0.5 else None
        rules.append(RecognitionRule(f"le{i}", pattern, window))
    return rules


@pytest.mark.parametrize("seed", range(200))
def test_recognize_matches_exhaustive_oracle(seed):
    rng = random.Random(seed)
    store = _random_log(rng)
    rules = _random_rules(rng)
    assert recognize(store.log, rules) == naive_recognize(store.log, rules)


@pytest.mark.parametrize("seed", range(50))
def test_recognized_events_separate_different_states(seed):
    rng = random.Random(seed)
    store = _random_log(rng)
    for le in recognize(store.log, _random_rules(rng)):
        assert le.before.instant < le.after.instant
        assert le.before.subject_view(le.subject) != le.after.subject_view(le.subject)


def test_log_serialization_is_stable():
    store, mary, _, _ = _store()
    store.ingest(DataEvent("d1", "x", 1, mary, "population", {"b": 2, "a": 1}))
    text = store.log.serialize()
    assert text == store.log.serialize()
    assert '"payload":{"a":1,"b":2}' in text
