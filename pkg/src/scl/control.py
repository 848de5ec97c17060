"""The control gate: programmatic validation of every cognition proposal
against the active policies before any action executes.

Checks are pure functions over the proposal, a read-only memory view, and the
run state; they return verdicts, never raise. The orchestrator owns all state
transitions (warn bookkeeping, final-action flag). The control-pass gate
itself is structural: the loop simply never reaches the action phase without
a PASS, so it needs no runtime check here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Optional, Sequence

from .domain import (
    Allocation,
    CognitionOutput,
    ControlVerdict,
    Draft,
    FinalAction,
    ToolCall,
    VerdictStatus,
    canonical_evidence_key,
)
from .memory import MemoryView
from .metaprompt import Enforcement, MetaPrompt, PolicyScope, PolicyType

if TYPE_CHECKING:
    from .orchestrator import TaskSpec

MISSING_CITATIONS = "REJECTED: Missing evidence citations"
REDUNDANT_TOOL_CALL = "REJECTED: Redundant tool call"


@dataclass
class RunState:
    """Per-run bookkeeping owned by a single loop."""

    final_action_taken: bool = False
    warned_policies: set = field(default_factory=set)
    # Breaches that reach execution; control rejections are preventions, not
    # violations, so this stays 0 on governed runs.
    violation_count: int = 0


def _passed(reason: str, loop_index: int) -> ControlVerdict:
    return ControlVerdict(VerdictStatus.PASS, None, reason, loop_index)


def _failed(policy_id: str, reason: str, loop_index: int) -> ControlVerdict:
    return ControlVerdict(VerdictStatus.FAIL, policy_id, reason, loop_index)


def check_evidence_citation(
    output: CognitionOutput,
    memory_view: MemoryView,
    *,
    policy_id: str = "must_cite_stored_evidence",
    loop_index: int = 0,
) -> ControlVerdict:
    """Terminal proposals must cite at least one stored evidence reference,
    and every cited reference must exist in memory."""
    if not output.evidence_refs:
        return _failed(policy_id, MISSING_CITATIONS, loop_index)
    for ref in output.evidence_refs:
        if memory_view.by_ref(ref) is None:
            return _failed(policy_id, f"REJECTED: cited evidence {ref} is not stored in memory", loop_index)
    return _passed("evidence citations present and stored", loop_index)


def check_redundancy(
    call: ToolCall,
    memory_view: MemoryView,
    *,
    policy_id: str = "no_redundant_tool_calls",
    loop_index: int = 0,
) -> ControlVerdict:
    """A tool call whose canonical key is already stored re-queries known
    information and is bounced."""
    if memory_view.has_evidence(canonical_evidence_key(call)):
        return _failed(policy_id, REDUNDANT_TOOL_CALL, loop_index)
    return _passed("no redundancy detected", loop_index)


def _fmt_share(value: float) -> str:
    text = f"{value * 100:.1f}".rstrip("0").rstrip(".")
    return f"{text}%"


def check_fairness(
    allocation: Allocation,
    profiles: Mapping[str, Mapping[str, Any]],
    weights: Mapping[str, float],
    max_load_fraction: float,
    *,
    skill_map: Optional[Mapping[str, Sequence[str]]] = None,
    policy_id: str = "workload_fairness",
    loop_index: int = 0,
) -> ControlVerdict:
    """Reject any allocation with an overloaded employee (weighted share
    strictly above the cap), a skill-incompatible assignment, or a capacity
    overrun; the reason names the offending employee."""
    total = sum(weights.get(task, 1) for task in allocation.assignments) or 1
    loads: dict[str, float] = {}
    counts: dict[str, int] = {}
    for task, emp in allocation.assignments.items():
        if emp not in profiles:
            return _failed(policy_id, f"REJECTED: no stored profile for assignee {emp}", loop_index)
        loads[emp] = loads.get(emp, 0) + weights.get(task, 1)
        counts[emp] = counts.get(emp, 0) + 1

    shares = {emp: load / total for emp, load in loads.items()}
    worst = max(shares, key=lambda e: (shares[e], e))
    if shares[worst] > max_load_fraction:
        return _failed(
            policy_id,
            f"Detected overload on {worst}: weighted share {_fmt_share(shares[worst])} exceeds the {_fmt_share(max_load_fraction)} cap",
            loop_index,
        )

    if skill_map:
        for task, emp in allocation.assignments.items():
            wanted = skill_map.get(task)
            if wanted and not (set(profiles[emp].get("skills", ())) & set(wanted)):
                return _failed(policy_id, f"REJECTED: {task} assigned to {emp} without a matching skill", loop_index)

    for emp, count in counts.items():
        capacity = profiles[emp].get("capacity")
        if capacity is not None and count > capacity:
            return _failed(policy_id, f"REJECTED: {emp} holds {count} tasks, over capacity {capacity}", loop_index)

    return _passed(
        f"balanced workloads: max weighted share {_fmt_share(shares[worst])} within the {_fmt_share(max_load_fraction)} cap",
        loop_index,
    )


def _count_table_rows(body: str, marker: str) -> int:
    rows = 0
    for raw in body.splitlines():
        line = raw.strip()
        if not line.startswith("|"):
            continue
        if line == marker.strip():
            continue
        if set(line) <= {"|", "-", " "}:  # separator row
            continue
        rows += 1
    return rows


def check_required_content(
    draft: Draft,
    required_marker: str,
    *,
    expected_rows: Optional[int] = None,
    policy_id: str = "include_allocation_table",
    loop_index: int = 0,
) -> ControlVerdict:
    """A communication draft must contain the required structural marker;
    when ``expected_rows`` is given, the table must have one row per task."""
    if required_marker not in draft.body:
        return _failed(policy_id, f"REJECTED: draft missing required content {required_marker!r}", loop_index)
    if expected_rows is not None:
        rows = _count_table_rows(draft.body, required_marker)
        if rows != expected_rows:
            return _failed(policy_id, f"REJECTED: allocation table has {rows} rows, expected {expected_rows}", loop_index)
    return _passed("required content present", loop_index)


_SCOPE_KINDS = {
    PolicyScope.ALL_FINAL_ACTIONS: (FinalAction, Draft),
    PolicyScope.TOOL_CALLS: (ToolCall,),
    PolicyScope.ALLOCATIONS: (Allocation,),
    PolicyScope.COMMUNICATIONS: (Draft,),
}


def validate(
    output: CognitionOutput,
    memory_view: MemoryView,
    state: RunState,
    metaprompt: MetaPrompt,
    *,
    task: Optional["TaskSpec"] = None,
    loop_index: int = 0,
) -> ControlVerdict:
    """Run every applicable policy check in metaprompt order; the first FAIL
    wins, downgraded to WARN on a warn_then_reject policy's first offense.
    Pure: never mutates memory or the run state."""
    proposal = output.proposal
    checks_run = 0
    for policy in metaprompt.policies:
        if policy.type is PolicyType.CONTROL_PASS_GATE:
            continue  # structural: enforced by the loop itself
        if not isinstance(proposal, _SCOPE_KINDS[policy.scope]):
            continue

        verdict: Optional[ControlVerdict] = None
        if policy.type is PolicyType.EVIDENCE_CITATION:
            verdict = check_evidence_citation(output, memory_view, policy_id=policy.id, loop_index=loop_index)
        elif policy.type is PolicyType.REDUNDANCY_CHECK and isinstance(proposal, ToolCall):
            verdict = check_redundancy(proposal, memory_view, policy_id=policy.id, loop_index=loop_index)
        elif policy.type is PolicyType.SINGLE_FINAL_ACTION:
            if state.final_action_taken:
                verdict = _failed(policy.id, "REJECTED: a final action already concluded this run", loop_index)
            else:
                verdict = _passed("no final action taken yet", loop_index)
        elif policy.type is PolicyType.FAIRNESS_CHECK and isinstance(proposal, Allocation):
            scenario = getattr(task, "scenario", None)
            profiles = _profiles_from_memory(memory_view, proposal)
            verdict = check_fairness(
                proposal,
                profiles,
                getattr(scenario, "weights", {}) or {},
                float(policy.params.get("max_load_fraction", getattr(scenario, "max_load_fraction", 1.0))),
                skill_map=getattr(scenario, "skill_map", None),
                policy_id=policy.id,
                loop_index=loop_index,
            )
        elif policy.type is PolicyType.REQUIRED_CONTENT and isinstance(proposal, Draft):
            scenario = getattr(task, "scenario", None)
            tasks = getattr(scenario, "tasks", None)
            verdict = check_required_content(
                proposal,
                str(policy.params.get("required_marker", "| Task | Assignee |")),
                expected_rows=len(tasks) if tasks else None,
                policy_id=policy.id,
                loop_index=loop_index,
            )

        if verdict is None:
            continue
        checks_run += 1
        if verdict.status is VerdictStatus.FAIL:
            if policy.enforcement is Enforcement.WARN_THEN_REJECT and policy.id not in state.warned_policies:
                return ControlVerdict(VerdictStatus.WARN, policy.id, verdict.reason, loop_index)
            return verdict

    return _passed(f"all applicable checks passed ({checks_run})", loop_index)


def _profiles_from_memory(memory_view: MemoryView, allocation: Allocation) -> dict:
    """Stored profile payloads for every assignee, keyed by employee name."""
    profiles: dict[str, Any] = {}
    for emp in allocation.assignments.values():
        evidence = memory_view.lookup(canonical_evidence_key(ToolCall("get_employee_profile", {"name": emp})))
        if evidence is not None:
            profiles[emp] = evidence.payload
    return profiles
