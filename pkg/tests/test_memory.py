"""Evidence store, trace log, and rejection persistence."""

import pytest

from scl.domain import ToolCall, canonical_evidence_key
from scl.memory import (
    DuplicateKey,
    MemoryStore,
    NonMonotoneSeq,
    Phase,
    RejectionRecord,
    TraceEntry,
)

MIAMI = ToolCall("get_weather", {"city": "Miami"})
MIAMI_PAYLOAD = {"city": "Miami", "temperature_f": 90, "condition": "Sunny", "precipitation_chance": 49}


def test_put_evidence_assigns_grammar_ref():
    store = MemoryStore()
    evidence = store.put_evidence(MIAMI, MIAMI_PAYLOAD, loop_index=2, category="wx")
    assert evidence.ref == "wx-miami-001"
    assert evidence.key == 'evidence_get_weather_{"city":"Miami"}'
    assert store.lookup(evidence.key) == evidence
    assert store.by_ref("wx-miami-001") == evidence


def test_each_distinct_subject_starts_at_001():
    store = MemoryStore()
    first = store.put_evidence(ToolCall("get_weather", {"city": "San Francisco"}), {}, 1, "wx")
    second = store.put_evidence(MIAMI, MIAMI_PAYLOAD, 2, "wx")
    assert first.ref == "wx-sanfrancisco-001"
    assert second.ref == "wx-miami-001"


def test_duplicate_key_rejected():
    store = MemoryStore()
    store.put_evidence(MIAMI, MIAMI_PAYLOAD, 1, "wx")
    with pytest.raises(DuplicateKey):
        store.put_evidence(MIAMI, MIAMI_PAYLOAD, 2, "wx")


def test_profile_evidence_ref():
    store = MemoryStore()
    evidence = store.put_evidence(
        ToolCall("get_employee_profile", {"name": "Alice"}),
        {"skills": ["data analysis", "statistics"], "capacity": 2},
        loop_index=1,
        category="emp",
    )
    assert evidence.ref == "emp-alice-001"


def test_lookup_absent_and_malformed_keys():
    store = MemoryStore()
    assert store.lookup(canonical_evidence_key(MIAMI)) is None
    assert store.lookup("not a key at all") is None
    store.put_evidence(MIAMI, MIAMI_PAYLOAD, 1, "wx")
    assert store.lookup(canonical_evidence_key(MIAMI)).payload["temperature_f"] == 90


def test_trace_seq_must_increase():
    store = MemoryStore()
    store.record_trace(TraceEntry("init", Phase.RETRIEVAL, {"need": []}, seq=1))
    with pytest.raises(NonMonotoneSeq):
        store.record_trace(TraceEntry("x", Phase.COGNITION, {}, seq=1))
    store.record_trace(TraceEntry("x", Phase.COGNITION, {}, seq=2))
    assert [t.seq for t in store.traces()] == [1, 2]


def test_append_trace_autoassigns_seq():
    store = MemoryStore()
    store.append_trace("a", Phase.COGNITION, {})
    store.append_trace("a", Phase.CONTROL, {})
    assert [t.seq for t in store.traces()] == [1, 2]


def test_rejections_in_insertion_order():
    store = MemoryStore()
    assert store.rejections() == []
    store.record_rejection(RejectionRecord("A", "Bob overloaded", 5, {"plan": "A"}))
    store.record_rejection(RejectionRecord("B", "still bad", 6, {"plan": "B"}))
    labels = [r.plan_label for r in store.rejections()]
    assert labels == ["A", "B"]
    assert store.rejections()[0].payload == {"plan": "A"}


def test_file_persistence_round_trip(tmp_path):
    path = tmp_path / "run.mem"
    store = MemoryStore(path)
    store.append_trace("init", Phase.RETRIEVAL, {"need": ["Miami weather"]})
    store.put_evidence(MIAMI, MIAMI_PAYLOAD, 1, "wx")
    store.record_rejection(RejectionRecord("A", "Bob overloaded", 5, {"plan": "A"}))

    loaded = MemoryStore.load(path)
    assert loaded.evidence_items() == store.evidence_items()
    assert loaded.traces() == store.traces()
    assert loaded.rejections() == store.rejections()
    # Counters continue from the replayed state: same subject increments.
    with pytest.raises(DuplicateKey):
        loaded.put_evidence(MIAMI, MIAMI_PAYLOAD, 3, "wx")
    other = loaded.put_evidence(ToolCall("check_umbrella_needed", {"city": "Miami"}), {"needed": True}, 3, "umb")
    assert other.ref == "umb-miami-001"


def test_view_is_read_only_surface():
    store = MemoryStore()
    store.put_evidence(MIAMI, MIAMI_PAYLOAD, 1, "wx")
    view = store.view()
    assert view.has_evidence(canonical_evidence_key(MIAMI))
    assert view.by_ref("wx-miami-001").payload["condition"] == "Sunny"
    assert not hasattr(view, "put_evidence")
    assert not hasattr(view, "record_trace")
