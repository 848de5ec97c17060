"""Structured external store: evidence, phase traces, and rejected plans.

The store is append-only. Evidence entries are immutable once stored, trace
entries carry a strictly increasing sequence number, and rejected proposals
are preserved verbatim for post-hoc audit. An optional backing file records
one self-contained JSON object per line, tagged evidence/trace/rejection, so
a store can be replayed exactly.

Concurrency: one writer per task run; readers may take consistent snapshots
at any time (snapshot methods return copies).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from .domain import EvidenceKey, EvidenceRef, ToolCall, canonical_evidence_key, make_evidence_ref, slugify


class Phase(str, Enum):
    RETRIEVAL = "Retrieval"
    COGNITION = "Cognition"
    CONTROL = "Control"
    ACTION = "Action"
    MEMORY = "Memory"


@dataclass(frozen=True)
class Evidence:
    """An immutable stored tool result with its citable reference id."""

    key: EvidenceKey
    ref: EvidenceRef
    payload: Any
    loop_index: int
    origin_tool: str


@dataclass(frozen=True)
class TraceEntry:
    loop_label: str
    phase: Phase
    body: Mapping[str, Any]
    seq: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "body", dict(self.body))


@dataclass(frozen=True)
class RejectionRecord:
    plan_label: str
    reason: str
    loop_index: int
    payload: Any


class DuplicateKey(Exception):
    """Evidence for this key already exists; redundancy should have been
    caught upstream by the control gate."""

    def __init__(self, key: EvidenceKey):
        self.key = key
        super().__init__(f"evidence already stored for key {key}")


class NonMonotoneSeq(ValueError):
    pass


_REF_PARTS = re.compile(r"^([a-z0-9]+)-([a-z0-9]+)-(\d{3})$")


class MemoryStore:
    """Append-only evidence/trace/rejection store for a single task run."""

    def __init__(self, path: Optional[str | Path] = None):
        self._path = Path(path) if path else None
        self._evidence: dict[EvidenceKey, Evidence] = {}
        self._by_ref: dict[EvidenceRef, Evidence] = {}
        self._traces: list[TraceEntry] = []
        self._rejections: list[RejectionRecord] = []
        # Counter per (category, slug): each distinct subject starts at 001.
        self._ref_seq: dict[tuple, int] = {}

    # -- evidence -----------------------------------------------------------

    def put_evidence(self, call: ToolCall, payload: Any, loop_index: int, category: str) -> Evidence:
        """Store a tool result under its canonical key with a fresh reference
        id. ``category`` is the tool's short tag used by the ref grammar."""
        key = canonical_evidence_key(call)
        if key in self._evidence:
            raise DuplicateKey(key)
        slug_source = str(call.primary_arg()) if call.args else call.tool_name
        slug = slugify(slug_source)
        seq = self._ref_seq.get((category, slug), 0) + 1
        self._ref_seq[(category, slug)] = seq
        evidence = Evidence(
            key=key,
            ref=make_evidence_ref(category, slug_source, seq),
            payload=payload,
            loop_index=loop_index,
            origin_tool=call.tool_name,
        )
        self._evidence[key] = evidence
        self._by_ref[evidence.ref] = evidence
        self._persist("evidence", {
            "key": evidence.key,
            "ref": evidence.ref,
            "payload": evidence.payload,
            "loop_index": evidence.loop_index,
            "origin_tool": evidence.origin_tool,
            "category": category,
        })
        return evidence

    def lookup(self, key: EvidenceKey) -> Optional[Evidence]:
        return self._evidence.get(key)

    def has_evidence(self, key: EvidenceKey) -> bool:
        return key in self._evidence

    def by_ref(self, ref: EvidenceRef) -> Optional[Evidence]:
        return self._by_ref.get(ref)

    def evidence_items(self) -> list:
        return list(self._evidence.values())

    # -- traces -------------------------------------------------------------

    def record_trace(self, entry: TraceEntry) -> None:
        if self._traces and entry.seq <= self._traces[-1].seq:
            raise NonMonotoneSeq(
                f"trace seq {entry.seq} not greater than last seq {self._traces[-1].seq}"
            )
        self._traces.append(entry)
        self._persist("trace", {
            "loop_label": entry.loop_label,
            "phase": entry.phase.value,
            "body": dict(entry.body),
            "seq": entry.seq,
        })

    def append_trace(self, loop_label: str, phase: Phase, body: Mapping[str, Any]) -> TraceEntry:
        """Convenience writer that assigns the next sequence number."""
        seq = self._traces[-1].seq + 1 if self._traces else 1
        entry = TraceEntry(loop_label=loop_label, phase=phase, body=body, seq=seq)
        self.record_trace(entry)
        return entry

    def traces(self) -> list:
        return list(self._traces)

    # -- rejections ---------------------------------------------------------

    def record_rejection(self, record: RejectionRecord) -> None:
        self._rejections.append(record)
        self._persist("rejection", {
            "plan_label": record.plan_label,
            "reason": record.reason,
            "loop_index": record.loop_index,
            "payload": record.payload,
        })

    def rejections(self) -> list:
        return list(self._rejections)

    # -- views and persistence ----------------------------------------------

    def view(self) -> "MemoryView":
        return MemoryView(self)

    def _persist(self, kind: str, data: Mapping[str, Any]) -> None:
        if self._path is None:
            return
        record = {"kind": kind, **data}
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        """Replay an append-only store file into an equal in-process store."""
        store = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                kind = record.pop("kind")
                if kind == "evidence":
                    evidence = Evidence(
                        key=record["key"],
                        ref=record["ref"],
                        payload=record["payload"],
                        loop_index=record["loop_index"],
                        origin_tool=record["origin_tool"],
                    )
                    store._evidence[evidence.key] = evidence
                    store._by_ref[evidence.ref] = evidence
                    match = _REF_PARTS.match(evidence.ref)
                    if match:
                        category, slug, seq = match.group(1), match.group(2), int(match.group(3))
                        store._ref_seq[(category, slug)] = max(store._ref_seq.get((category, slug), 0), seq)
                elif kind == "trace":
                    store.record_trace(TraceEntry(
                        loop_label=record["loop_label"],
                        phase=Phase(record["phase"]),
                        body=record["body"],
                        seq=record["seq"],
                    ))
                elif kind == "rejection":
                    store._rejections.append(RejectionRecord(
                        plan_label=record["plan_label"],
                        reason=record["reason"],
                        loop_index=record["loop_index"],
                        payload=record["payload"],
                    ))
        return store


@dataclass(frozen=True)
class MemoryView:
    """Read-only facade handed to cognition engines and the control gate."""

    _store: MemoryStore

    def lookup(self, key: EvidenceKey) -> Optional[Evidence]:
        return self._store.lookup(key)

    def has_evidence(self, key: EvidenceKey) -> bool:
        return self._store.has_evidence(key)

    def by_ref(self, ref: EvidenceRef) -> Optional[Evidence]:
        return self._store.by_ref(ref)

    def evidence_items(self) -> list:
        return self._store.evidence_items()

    def rejections(self) -> list:
        return self._store.rejections()

    def traces(self) -> list:
        return self._store.traces()
