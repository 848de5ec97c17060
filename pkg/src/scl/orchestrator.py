"""The governed main loop: one-time retrieval initialization, then recurrent
cognition -> control -> action -> memory cycles until a final action passes
the gate or the loop bound is hit.

Every phase of every loop is traced into the memory store, and the finished
run is returned as an audit log whose serialized form is byte-identical
across runs with the deterministic mock engine. Action executes only after a
control PASS; WARN and FAIL verdicts skip action and feed back into the next
cognition context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

from . import audit
from .cognition import CognitionContext, CognitionEngine, EngineFailure
from .control import RunState, validate
from .domain import (
    Allocation,
    CognitionOutput,
    ControlVerdict,
    Draft,
    FinalAction,
    FinalActionKind,
    ToolCall,
    VerdictStatus,
    short_label,
)
from .memory import MemoryStore, Phase, RejectionRecord
from .metaprompt import MetaPrompt, Policy, builtin_policies
from .tools import ArgSchemaViolation, ToolRegistry, UnknownTool


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class WeatherScenario:
    cities: tuple = ()
    threshold_f: float = 55.0
    kind: str = field(default="weather", init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cities", tuple(self.cities))


@dataclass(frozen=True)
class AllocationScenario:
    employees: tuple = ()
    tasks: tuple = ()
    weights: Mapping[str, float] = field(default_factory=dict)
    # task -> acceptable skills, primary skill first; drives both the
    # planner's first-fit choice and the fairness compatibility check.
    skill_map: Mapping[str, tuple] = field(default_factory=dict)
    max_load_fraction: float = 0.4
    manager_email: str = "manager@example.com"
    kind: str = field(default="allocation", init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "employees", tuple(self.employees))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "weights", dict(self.weights))
        object.__setattr__(self, "skill_map", {k: tuple(v) for k, v in dict(self.skill_map).items()})


Scenario = Union[WeatherScenario, AllocationScenario]


@dataclass(frozen=True)
class TaskSpec:
    id: str
    description: str
    scenario: Scenario
    policies: MetaPrompt = field(default_factory=builtin_policies)
    max_loops: int = 16


@dataclass(frozen=True)
class InitResult:
    needs: tuple
    threshold_hot_F: Optional[float]
    grounded_directives: str


def _validate_spec(spec: TaskSpec) -> None:
    if spec.max_loops < 1:
        raise InvalidSpec("max_loops must be >= 1")
    if not spec.policies.policies:
        raise InvalidSpec("a governed run needs at least one policy")
    scenario = spec.scenario
    if isinstance(scenario, WeatherScenario):
        if not scenario.cities:
            raise InvalidSpec("weather scenario needs at least one city")
        if len(set(scenario.cities)) != len(scenario.cities):
            raise InvalidSpec("weather scenario cities must be distinct")
    elif isinstance(scenario, AllocationScenario):
        if not scenario.employees:
            raise InvalidSpec("allocation scenario needs at least one employee")
        if not scenario.tasks:
            raise InvalidSpec("allocation scenario needs at least one task")
        if not (0 < scenario.max_load_fraction <= 1):
            raise InvalidSpec("max_load_fraction must be in (0, 1]")
        if not scenario.manager_email:
            raise InvalidSpec("allocation scenario needs a manager email")
    else:
        raise InvalidSpec(f"unknown scenario type {type(scenario).__name__}")


def initialize_context(spec: TaskSpec) -> InitResult:
    """One-time retrieval: derive the run's evidence needs and grounding from
    the structured task."""
    _validate_spec(spec)
    scenario = spec.scenario
    if isinstance(scenario, WeatherScenario):
        needs = tuple(f"{short_label(city)} weather" for city in scenario.cities)
        threshold: Optional[float] = scenario.threshold_f
    else:
        needs = tuple(f"{name} profile" for name in scenario.employees)
        threshold = None
    return InitResult(needs=needs, threshold_hot_F=threshold, grounded_directives=spec.description)


def load_task_file(path: str | Path, extra_policies: Optional[Iterable[Policy]] = None) -> TaskSpec:
    """Read a JSON task file. File-level policies extend the builtins, and
    ``extra_policies`` (for example a parsed ``.scp`` file) extend both."""
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"cannot read task file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidSpec("task file must contain a JSON object")

    raw_scenario = data.get("scenario")
    if not isinstance(raw_scenario, dict):
        raise InvalidSpec("task file missing 'scenario' object")
    kind = raw_scenario.get("kind")
    try:
        if kind == "weather":
            threshold = raw_scenario["threshold_f"]
            if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
                raise InvalidSpec("threshold_f must be a number")
            # Keep the JSON numeric type: an integer threshold serializes as 55.
            scenario: Scenario = WeatherScenario(
                cities=raw_scenario.get("cities", ()),
                threshold_f=threshold,
            )
        elif kind == "allocation":
            scenario = AllocationScenario(
                employees=raw_scenario.get("employees", ()),
                tasks=raw_scenario.get("tasks", ()),
                weights=raw_scenario.get("weights", {}),
                skill_map=raw_scenario.get("skill_map", {}),
                max_load_fraction=float(raw_scenario.get("max_load_fraction", 0.4)),
                manager_email=raw_scenario.get("manager_email", "manager@example.com"),
            )
        else:
            raise InvalidSpec(f"unknown scenario kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSpec):
            raise
        raise InvalidSpec(f"malformed scenario: {exc}") from exc

    metaprompt = builtin_policies()
    file_policies = []
    for raw in data.get("policies", []):
        try:
            file_policies.append(Policy(
                id=raw.get("id", raw["type"]),
                type=raw["type"],
                scope=raw["scope"],
                enforcement=raw.get("enforcement", "reject"),
                params=raw.get("params", {}),
            ))
        except (KeyError, ValueError) as exc:
            raise InvalidSpec(f"malformed policy entry: {exc}") from exc
    metaprompt = metaprompt.merged(file_policies)
    if extra_policies:
        metaprompt = metaprompt.merged(extra_policies)
    if data.get("directive_text"):
        metaprompt = MetaPrompt(metaprompt.policies, str(data["directive_text"]))

    spec = TaskSpec(
        id=str(data.get("id", Path(path).stem)),
        description=str(data.get("description", "")),
        scenario=scenario,
        policies=metaprompt,
        max_loops=int(data.get("max_loops", 16)),
    )
    _validate_spec(spec)
    return spec


def _loop_label(proposal: Any) -> str:
    if isinstance(proposal, ToolCall):
        primary = proposal.primary_arg()
        return str(primary) if primary is not None else proposal.tool_name
    if isinstance(proposal, Allocation):
        return "allocate"
    return "integrate"


def _describe_proposal(proposal: Any) -> str:
    if isinstance(proposal, ToolCall):
        return proposal.describe()
    if isinstance(proposal, FinalAction):
        return proposal.describe()
    if isinstance(proposal, Draft):
        return f"draft({proposal.to})"
    if isinstance(proposal, Allocation):
        return f"plan {proposal.label}"
    return str(proposal)


def _proposal_payload(proposal: Any) -> dict:
    if isinstance(proposal, Allocation):
        return {"plan": proposal.label, "assignments": dict(proposal.assignments)}
    if isinstance(proposal, Draft):
        return {"to": proposal.to, "subject": proposal.subject, "body": proposal.body}
    if isinstance(proposal, ToolCall):
        return {"tool": proposal.tool_name, "args": dict(proposal.args)}
    if isinstance(proposal, FinalAction):
        return {"final": proposal.describe()}
    return {"proposal": str(proposal)}


def _rejection_label(proposal: Any) -> str:
    if isinstance(proposal, Allocation):
        return proposal.label
    if isinstance(proposal, ToolCall):
        return proposal.tool_name
    if isinstance(proposal, Draft):
        return "draft"
    return "final-action"


def run(
    spec: TaskSpec,
    engine: CognitionEngine,
    registry: ToolRegistry,
    *,
    memory: Optional[MemoryStore] = None,
    memory_path: Optional[str | Path] = None,
) -> audit.AuditLog:
    """Execute one governed task run and return its complete audit log."""
    init = initialize_context(spec)
    store = memory if memory is not None else MemoryStore(memory_path)
    metaprompt = spec.policies
    state = RunState()

    init_body: dict = {"need": list(init.needs)}
    if init.threshold_hot_F is not None:
        init_body["threshold_hot_F"] = init.threshold_hot_F
    store.append_trace("init", Phase.RETRIEVAL, init_body)

    last_verdict: Optional[ControlVerdict] = None
    final_text = "none"
    status = "aborted: loop bound"

    for loop_index in range(1, spec.max_loops + 1):
        ctx = CognitionContext(
            task=spec,
            metaprompt=metaprompt,
            memory_view=store.view(),
            last_verdict=last_verdict,
            loop_index=loop_index,
        )
        try:
            output = engine.next_proposal(ctx)
        except EngineFailure as exc:
            store.append_trace(f"loop-{loop_index}", Phase.COGNITION, {"error": str(exc)})
            status = "aborted: engine failure"
            exc.audit_log = _finish(spec, store, state, final_text, status)
            raise

        proposal = output.proposal
        label = _loop_label(proposal)
        cog_body: dict = {
            "reasoning": output.reasoning,
            "kind": _proposal_kind(proposal),
            "proposal": _describe_proposal(proposal),
            "evidence_refs": list(output.evidence_refs),
        }
        if isinstance(proposal, Allocation):
            cog_body["plan"] = proposal.label
            cog_body["assignments"] = dict(proposal.assignments)
        if isinstance(proposal, (FinalAction, Draft)):
            cog_body["decision"] = _decision_text(proposal)
        store.append_trace(label, Phase.COGNITION, cog_body)

        verdict = validate(output, store.view(), state, metaprompt, task=spec, loop_index=loop_index)
        control_body: dict = {"status": verdict.status.value, "reason": verdict.reason}
        if verdict.policy_id:
            control_body["policy"] = verdict.policy_id
        store.append_trace(label, Phase.CONTROL, control_body)

        if verdict.status is VerdictStatus.FAIL:
            record = RejectionRecord(
                plan_label=_rejection_label(proposal),
                reason=verdict.reason,
                loop_index=loop_index,
                payload=_proposal_payload(proposal),
            )
            store.record_rejection(record)
            store.append_trace(label, Phase.MEMORY, {
                "rejection": {"plan": record.plan_label, "reason": record.reason},
            })
            last_verdict = verdict
            continue

        if verdict.status is VerdictStatus.WARN:
            state.warned_policies.add(verdict.policy_id)
            store.append_trace(label, Phase.MEMORY, {
                "warning": {"policy": verdict.policy_id, "reason": verdict.reason},
            })
            last_verdict = verdict
            continue

        # PASS: the action phase is now authorized.
        last_verdict = None
        if isinstance(proposal, ToolCall):
            executed = _execute_call(store, registry, proposal, label, loop_index)
            if not executed:
                last_verdict = ControlVerdict(
                    VerdictStatus.FAIL, "action_execution", "action failed to execute", loop_index,
                )
            continue

        if isinstance(proposal, Allocation):
            store.append_trace(label, Phase.ACTION, {"kind": "approve", "plan": proposal.label})
            store.append_trace(label, Phase.MEMORY, {
                "approved": {"plan": proposal.label, "assignments": dict(proposal.assignments)},
            })
            continue

        # Terminal step: a Draft executes as its backing email send; a
        # FinalAction executes its call (or delivers its answer).
        final = _as_final_action(proposal)
        if final.kind is FinalActionKind.TOOL_BACKED:
            assert final.call is not None
            try:
                registry.execute(final.call)
            except (UnknownTool, ArgSchemaViolation) as exc:
                store.append_trace(label, Phase.ACTION, {"kind": "failed", "call": final.call.describe(), "error": str(exc)})
                store.append_trace(label, Phase.MEMORY, {"noted": "final action failed to execute"})
                last_verdict = ControlVerdict(VerdictStatus.FAIL, "action_execution", str(exc), loop_index)
                continue
            store.append_trace(label, Phase.ACTION, {
                "kind": "execute", "tool": final.call.tool_name, "args": dict(final.call.args),
            })
        else:
            store.append_trace(label, Phase.ACTION, {"kind": "answer", "text": final.answer_text})
        final_text = final.describe()
        store.append_trace(label, Phase.MEMORY, {"archived": final_text})
        state.final_action_taken = True
        status = "completed"
        break

    return _finish(spec, store, state, final_text, status)


def _proposal_kind(proposal: Any) -> str:
    if isinstance(proposal, ToolCall):
        return "tool_call"
    if isinstance(proposal, Allocation):
        return "allocation"
    if isinstance(proposal, Draft):
        return "draft"
    return "final"


def _decision_text(proposal: Union[FinalAction, Draft]) -> str:
    if isinstance(proposal, Draft):
        return f"send_email({proposal.to})"
    return proposal.describe()


def _as_final_action(proposal: Union[FinalAction, Draft]) -> FinalAction:
    if isinstance(proposal, Draft):
        call = ToolCall("send_email", {"to": proposal.to, "subject": proposal.subject, "body": proposal.body})
        return FinalAction.tool(call, target=proposal.to)
    return proposal


def _execute_call(
    store: MemoryStore,
    registry: ToolRegistry,
    call: ToolCall,
    label: str,
    loop_index: int,
) -> bool:
    """Run an ordinary (non-final) tool call and store its result as
    evidence. Execution errors are logged as action-phase failures."""
    try:
        result = registry.execute(call)
    except (UnknownTool, ArgSchemaViolation) as exc:
        store.append_trace(label, Phase.ACTION, {"kind": "failed", "call": call.describe(), "error": str(exc)})
        store.append_trace(label, Phase.MEMORY, {"noted": "action failed to execute"})
        return False
    store.append_trace(label, Phase.ACTION, {
        "kind": "execute", "tool": call.tool_name, "args": dict(call.args),
    })
    evidence = store.put_evidence(call, result.payload, loop_index, result.category)
    spec_summary = registry.get(call.tool_name)
    if spec_summary is not None and spec_summary.summarize is not None:
        res = spec_summary.summarize(call.args, result.payload, evidence.ref)
    else:
        res = {**{k: v for k, v in call.args.items()}, "ref": evidence.ref}
    store.append_trace(label, Phase.MEMORY, {"stored": evidence.key, "ref": evidence.ref, "res": res})
    return True


def _finish(spec: TaskSpec, store: MemoryStore, state: RunState, final_text: str, status: str) -> audit.AuditLog:
    return audit.AuditLog(
        task=spec.description,
        policies=tuple(spec.policies.ids()),
        entries=tuple(audit.entries_from_traces(store.traces())),
        summary={
            "final_action": final_text,
            "policy_violations": state.violation_count,
            "status": status,
        },
    )
