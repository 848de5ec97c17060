"""Audit document serialization, reliability metrics, and offline trace
property checks.

The serialized document is deterministic: fixed key order, no timestamps,
stable bytes across runs and platforms. Metrics are a pure function of the
log, so re-running them on a parsed document yields identical values.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional

from .domain import short_label
from .memory import Phase, TraceEntry


class MalformedLog(ValueError):
    pass


@dataclass(frozen=True)
class AuditLog:
    """Ordered record of all phases of all loops plus the run summary."""

    task: str
    policies: tuple
    entries: tuple  # per-loop dicts in execution order, init first
    summary: Mapping[str, Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "summary", dict(self.summary))


@dataclass(frozen=True)
class Metrics:
    policy_violations: int
    preventions: int
    redundant_tool_calls: int
    audit_trail_completeness: float
    evidence_citation_rate: float
    conditional_logic_errors: float
    memory_drift_events: int
    loops: int


@dataclass(frozen=True)
class PropertyResult:
    property_id: str
    holds: bool
    counterexample: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.holds and self.counterexample is None:
            raise ValueError("failing property needs a counterexample index")


# -- building entries from phase traces ---------------------------------------


def entries_from_traces(traces: Iterable[TraceEntry]) -> list:
    """Aggregate per-phase trace entries into one audit entry per loop.

    A Retrieval trace becomes the init entry; every Cognition trace starts a
    new loop entry that absorbs the following Control/Action/Memory traces.
    """
    entries: list[dict] = []
    bodies: dict[str, Mapping[str, Any]] = {}
    current: Optional[dict] = None

    def finalize() -> None:
        nonlocal current, bodies
        if current is None:
            return
        cog = bodies.get("Cognition", {})
        ctrl = bodies.get("Control", {})
        act = bodies.get("Action", {})
        mem = bodies.get("Memory", {})
        status = ctrl.get("status")
        executed = act.get("kind") in ("execute", "answer", "approve")

        if status == "PASS" and cog.get("kind") in ("final", "draft") and executed:
            current["decision"] = cog.get("decision", cog.get("proposal", ""))
            current["evidence"] = list(cog.get("evidence_refs", ()))
            current["explanation"] = cog.get("reasoning", "")
        elif isinstance(mem.get("res"), dict):
            current["res"] = dict(mem["res"])
        elif cog.get("kind") == "allocation":
            res = {
                "plan": cog.get("plan", ""),
                "assignments": dict(cog.get("assignments", {})),
                "control": status or "none",
            }
            if status in ("FAIL", "WARN"):
                res["reason"] = ctrl.get("reason", "")
            current["res"] = res
        else:
            res = {"control": status or "none", "reason": ctrl.get("reason", cog.get("error", ""))}
            if ctrl.get("policy"):
                res["policy"] = ctrl["policy"]
            if cog.get("proposal"):
                res["proposal"] = cog["proposal"]
            current["res"] = res
        entries.append(current)
        current, bodies = None, {}

    for trace in traces:
        if trace.phase is Phase.RETRIEVAL:
            finalize()
            entries.append({"loop": trace.loop_label, "module": "Retrieval", "res": dict(trace.body)})
            continue
        if trace.phase is Phase.COGNITION:
            finalize()
            current = {"loop": trace.loop_label, "phases": [trace.phase.value]}
            bodies = {trace.phase.value: dict(trace.body)}
            continue
        if current is None:
            # Orphan phase without a cognition opener; keep it visible.
            current = {"loop": trace.loop_label, "phases": []}
            bodies = {}
        current["phases"].append(trace.phase.value)
        bodies[trace.phase.value] = dict(trace.body)
    finalize()
    return entries


# -- serialization --------------------------------------------------------------

_ENTRY_KEYS = ("loop", "module", "phases", "res", "decision", "evidence", "explanation")
_SUMMARY_KEYS = ("final_action", "policy_violations", "status")


def _ordered_entry(entry: Mapping[str, Any]) -> dict:
    return {key: entry[key] for key in _ENTRY_KEYS if key in entry}


def serialize_audit(log: AuditLog) -> str:
    """Render the audit document with fixed field order and stable bytes."""
    doc = {
        "task": log.task,
        "policies": list(log.policies),
        "log": [_ordered_entry(e) for e in log.entries],
        "summary": {key: log.summary[key] for key in _SUMMARY_KEYS if key in log.summary},
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def parse_audit(text: str) -> AuditLog:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedLog(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedLog("audit document must be a JSON object")
    for key, kind in (("task", str), ("policies", list), ("log", list), ("summary", dict)):
        if not isinstance(doc.get(key), kind):
            raise MalformedLog(f"audit document missing or malformed {key!r}")
    for entry in doc["log"]:
        if not isinstance(entry, dict) or "loop" not in entry:
            raise MalformedLog("every log entry needs a 'loop' label")
    return AuditLog(task=doc["task"], policies=tuple(doc["policies"]), entries=tuple(doc["log"]), summary=doc["summary"])


# -- metrics ---------------------------------------------------------------------


def _is_init(entry: Mapping[str, Any]) -> bool:
    return "module" in entry and "phases" not in entry


def _control_status(entry: Mapping[str, Any]) -> Optional[str]:
    res = entry.get("res")
    if isinstance(res, dict):
        status = res.get("control")
        if isinstance(status, str):
            return status
    return None


def _action_identity(entry: Mapping[str, Any]) -> Optional[str]:
    if "Action" not in entry.get("phases", ()):
        return None
    res = entry.get("res")
    if isinstance(res, dict):
        ref = res.get("ref")
        if isinstance(ref, str):
            return ref
        return json.dumps(res, sort_keys=True)
    return None


_TEMP_CLAIM = re.compile(r"\(([^:()]+): (-?\d+(?:\.\d+)?)°F\)")


def compute_metrics(log: AuditLog) -> Metrics:
    """Recompute the reliability metrics from the log alone."""
    entries = list(log.entries)
    if not all(isinstance(e, Mapping) and "loop" in e for e in entries):
        raise MalformedLog("every log entry needs a 'loop' label")
    init_entries = [e for e in entries if _is_init(e)]
    loop_entries = [e for e in entries if not _is_init(e)]

    recorded = len(init_entries) + sum(len(e.get("phases", ())) for e in loop_entries)
    expected = len(init_entries)
    for entry in loop_entries:
        if "Action" in entry.get("phases", ()):
            expected += 4
        elif _control_status(entry) in ("FAIL", "WARN"):
            expected += 3  # rejected and warned loops never reach the action phase
        else:
            expected += 4
    completeness = min(recorded / expected, 1.0) if expected else 1.0

    violations = 0
    preventions = 0
    redundant = 0
    seen_actions: set = set()
    decision_count = 0
    for entry in loop_entries:
        phases = list(entry.get("phases", ()))
        status = _control_status(entry)
        if status == "FAIL":
            preventions += 1
        if "Action" in phases:
            gated = "Control" in phases and phases.index("Control") < phases.index("Action")
            if not gated or status in ("FAIL", "WARN"):
                violations += 1
            identity = _action_identity(entry)
            if identity is not None:
                if identity in seen_actions:
                    redundant += 1
                    violations += 1
                else:
                    seen_actions.add(identity)
        if "decision" in entry:
            decision_count += 1
            if decision_count > 1:
                violations += 1

    stored_refs: set = set()
    decision_valid = 0
    decision_total = 0
    for entry in entries:
        if "decision" in entry:
            decision_total += 1
            cited = entry.get("evidence") or []
            if cited and all(ref in stored_refs for ref in cited):
                decision_valid += 1
        res = entry.get("res")
        if isinstance(res, dict) and isinstance(res.get("ref"), str):
            stored_refs.add(res["ref"])
    citation_rate = decision_valid / decision_total if decision_total else 1.0

    logic_errors, logic_total = _conditional_logic_errors(entries)
    drift = _drift_events(entries)

    return Metrics(
        policy_violations=violations,
        preventions=preventions,
        redundant_tool_calls=redundant,
        audit_trail_completeness=completeness,
        evidence_citation_rate=citation_rate,
        conditional_logic_errors=(logic_errors / logic_total) if logic_total else 0.0,
        memory_drift_events=drift,
        loops=len(loop_entries),
    )


def _recorded_temps(entries: Iterable[Mapping[str, Any]]) -> dict:
    temps: dict[str, float] = {}
    for entry in entries:
        res = entry.get("res")
        if isinstance(res, dict) and "city" in res and "temp_F" in res:
            temps[str(res["city"])] = float(res["temp_F"])
    return temps


def _conditional_logic_errors(entries: list) -> tuple:
    """Re-derive each recorded branch decision with the branch rule and count
    disagreements."""
    from .cognition import Branch, decide_branch  # local import avoids a cycle

    threshold: Optional[float] = None
    for entry in entries:
        if _is_init(entry) and isinstance(entry.get("res"), dict):
            value = entry["res"].get("threshold_hot_F")
            if value is not None:
                threshold = float(value)
    temps = _recorded_temps(entries)
    decisions = [e for e in entries if "decision" in e]
    if threshold is None or not temps or not decisions:
        return 0, 0

    expected = decide_branch(temps, threshold)
    expected_tool = {
        Branch.ALL_ABOVE: "generate_image",
        Branch.TWO_ABOVE: "send_email",
        Branch.ONE_ABOVE: "answer",
        Branch.NONE_ABOVE: "recommend_snacks",
    }[expected.branch]

    errors = 0
    for entry in decisions:
        decision = str(entry.get("decision", ""))
        tool = decision.split("(", 1)[0]
        if tool != expected_tool:
            errors += 1
            continue
        if expected.destination is not None:
            explanation = str(entry.get("explanation", ""))
            dest = expected.destination
            if dest not in explanation and short_label(dest) not in explanation and dest not in decision:
                errors += 1
    return errors, len(decisions)


def _drift_events(entries: list) -> int:
    """Count temperature claims in decision explanations that contradict the
    recorded evidence for the same city."""
    temps = _recorded_temps(entries)
    labels = {short_label(city): temp for city, temp in temps.items()}
    labels.update(temps)
    drift = 0
    for entry in entries:
        if "decision" not in entry:
            continue
        for claim_label, claim_value in _TEMP_CLAIM.findall(str(entry.get("explanation", ""))):
            recorded = labels.get(claim_label.strip())
            if recorded is not None and float(claim_value) != recorded:
                drift += 1
    return drift


# -- trace properties -------------------------------------------------------------

P1 = "P1_pass_before_action"
P2 = "P2_cited_evidence_exists_before_use"
P3 = "P3_single_final_action"


def check_trace_properties(log: AuditLog) -> list:
    """Offline temporal checks: PASS precedes every action, cited evidence is
    stored before use, at most one final action."""
    entries = list(log.entries)
    if not all(isinstance(e, Mapping) and "loop" in e for e in entries):
        raise MalformedLog("every log entry needs a 'loop' label")

    p1_counter: Optional[int] = None
    for idx, entry in enumerate(entries):
        phases = list(entry.get("phases", ()))
        if "Action" not in phases:
            continue
        gated = "Control" in phases and phases.index("Control") < phases.index("Action")
        if not gated or _control_status(entry) in ("FAIL", "WARN"):
            p1_counter = idx
            break

    p2_counter: Optional[int] = None
    stored_refs: set = set()
    for idx, entry in enumerate(entries):
        for ref in entry.get("evidence") or []:
            if ref not in stored_refs:
                p2_counter = idx
                break
        if p2_counter is not None:
            break
        res = entry.get("res")
        if isinstance(res, dict) and isinstance(res.get("ref"), str):
            stored_refs.add(res["ref"])

    p3_counter: Optional[int] = None
    seen_decision = False
    for idx, entry in enumerate(entries):
        if "decision" in entry:
            if seen_decision:
                p3_counter = idx
                break
            seen_decision = True

    return [
        PropertyResult(P1, p1_counter is None, p1_counter),
        PropertyResult(P2, p2_counter is None, p2_counter),
        PropertyResult(P3, p3_counter is None, p3_counter),
    ]
