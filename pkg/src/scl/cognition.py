"""Cognition engines: propose the next reasoning step or action each cycle.

Two engines ship with the runtime. ``MockEngine`` is a deterministic
rule-following planner for the two bundled scenarios, which makes whole runs
reproducible byte for byte. ``RemoteEngine`` adapts any chat-completion HTTP
endpoint, coercing the model's structured reply into a proposal the control
gate can validate. Engines never mutate memory; they only read the view they
are handed.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping, Optional, Protocol, Sequence

import requests

from .domain import (
    Allocation,
    CognitionOutput,
    ControlVerdict,
    Draft,
    FinalAction,
    ToolCall,
    canonical_evidence_key,
    short_label,
)
from .memory import MemoryView
from .metaprompt import MetaPrompt

if TYPE_CHECKING:
    from .orchestrator import TaskSpec


@dataclass(frozen=True)
class CognitionContext:
    """Everything an engine may consult when producing one proposal."""

    task: "TaskSpec"
    metaprompt: MetaPrompt
    memory_view: MemoryView
    last_verdict: Optional[ControlVerdict]  # present iff previous proposal did not pass
    loop_index: int


class CognitionEngine(Protocol):
    def next_proposal(self, ctx: CognitionContext) -> CognitionOutput: ...


class EngineFailure(Exception):
    """Unrecoverable engine error (remote outage, malformed output after
    retries). The orchestrator aborts the run with a logged failure entry."""

    def __init__(self, message: str, audit_log: Any = None):
        super().__init__(message)
        self.audit_log = audit_log


class SchemaViolation(ValueError):
    pass


class NoFeasibleRepair(Exception):
    pass


# -- conditional branch rule ---------------------------------------------------


class Branch(str, Enum):
    ALL_ABOVE = "all_above"
    TWO_ABOVE = "two_above"
    ONE_ABOVE = "one_above"
    NONE_ABOVE = "none_above"


@dataclass(frozen=True)
class BranchDecision:
    branch: Branch
    destination: Optional[str]
    # none_above runs an ordinary validated cancel_trip before the final
    # snack recommendation; other branches have no pre-step.
    pre_call: Optional[ToolCall]
    final: FinalAction
    explanation: str


def _fmt_temp(value: float) -> str:
    return f"{value:g}"


def decide_branch(
    temps: Mapping[str, float],
    threshold_f: float,
    records: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> BranchDecision:
    """Map above-threshold counts to the four trip branches.

    "Above" is strict (> threshold). With k of n cities above: k == n picks
    the coolest above city and renders its weather image; 2 <= k < n picks the
    coolest of the above cities and emails the destination; k == 1 answers
    with that single destination; k == 0 cancels the trip and recommends
    snacks. Ties on temperature break toward the earlier city in input order.
    ``records`` optionally supplies full weather payloads so the image
    description can include conditions.
    """
    if not temps:
        raise ValueError("temps must be non-empty")
    cities = list(temps)
    above = [c for c in cities if temps[c] > threshold_f]
    n, k = len(cities), len(above)
    t = _fmt_temp(threshold_f)

    if k == 0:
        return BranchDecision(
            branch=Branch.NONE_ABOVE,
            destination=None,
            pre_call=ToolCall("cancel_trip"),
            final=FinalAction.tool(ToolCall("recommend_snacks"), target="home"),
            explanation=f"No cities above {t}°F; trip cancelled, snacks recommended",
        )

    coolest = min(above, key=lambda c: (temps[c], cities.index(c)))
    temp = _fmt_temp(temps[coolest])

    if k == n:
        record = records.get(coolest) if records else None
        condition = f"{record['condition']}, " if record and "condition" in record else ""
        description = f"{coolest} weather: {condition}{temp}°F"
        return BranchDecision(
            branch=Branch.ALL_ABOVE,
            destination=coolest,
            pre_call=None,
            final=FinalAction.tool(ToolCall("generate_image", {"description": description}), target=coolest),
            explanation=f"All {n} cities above {t}°F; chose coolest ({short_label(coolest)}: {temp}°F)",
        )
    if k == 1:
        return BranchDecision(
            branch=Branch.ONE_ABOVE,
            destination=coolest,
            pre_call=None,
            final=FinalAction.answer(f"Travel to {coolest}"),
            explanation=f"Only {coolest} above {t}°F; travel there",
        )
    explanation = f"{k} of {n} cities above {t}°F; chose cooler ({short_label(coolest)}: {temp}°F)"
    call = ToolCall("send_email", {
        "to": "test-scl@test.com",
        "subject": f"Trip destination: {coolest}",
        "body": explanation,
    })
    return BranchDecision(
        branch=Branch.TWO_ABOVE,
        destination=coolest,
        pre_call=None,
        final=FinalAction.tool(call, target="test-scl@test.com"),
        explanation=explanation,
    )


# -- allocation planning -------------------------------------------------------


def _compatible(task: str, employee: str, profiles: Mapping[str, Mapping], skill_map: Mapping[str, Sequence[str]]) -> bool:
    wanted = skill_map.get(task)
    if not wanted:
        return True
    have = set(profiles.get(employee, {}).get("skills", ()))
    return bool(have & set(wanted))


def greedy_allocation(
    employees: Sequence[str],
    tasks: Sequence[str],
    skill_map: Mapping[str, Sequence[str]],
    profiles: Mapping[str, Mapping],
    label: str = "A",
) -> Allocation:
    """First-fit assignment: each task goes to the first employee in roster
    order holding the task's primary (first-listed) skill, falling back to any
    acceptable skill, then to the roster head. Capacity overflow is allowed;
    the control gate judges the result."""
    assignments: dict[str, str] = {}
    for task in tasks:
        wanted = list(skill_map.get(task, ()))
        pick = None
        if wanted:
            primary = wanted[0]
            pick = next((e for e in employees if primary in profiles.get(e, {}).get("skills", ())), None)
        if pick is None:
            pick = next((e for e in employees if _compatible(task, e, profiles, skill_map)), employees[0])
        assignments[task] = pick
    return Allocation(assignments=assignments, label=label)


def _weighted_shares(assignments: Mapping[str, str], weights: Mapping[str, float]) -> dict[str, float]:
    total = sum(weights.get(t, 1) for t in assignments) or 1
    loads: dict[str, float] = {}
    for task, emp in assignments.items():
        loads[emp] = loads.get(emp, 0) + weights.get(task, 1)
    return {emp: load / total for emp, load in loads.items()}


def _next_label(label: str) -> str:
    if len(label) == 1 and "A" <= label < "Z":
        return chr(ord(label) + 1)
    return label + "'"


def repair_allocation(
    rejected: Allocation,
    reason: str,
    profiles: Mapping[str, Mapping],
    weights: Mapping[str, float],
    *,
    skill_map: Mapping[str, Sequence[str]],
    task_order: Sequence[str],
) -> Allocation:
    """Move exactly one task away from the overloaded employee named in
    ``reason``, choosing the skill-compatible, capacity-respecting move that
    minimizes the resulting maximum weighted load share. Ties break toward
    the task latest in the project task list; the max share never increases.
    Returns the allocation unchanged when the reason names no known employee.
    """
    overloaded = next((name for name in profiles if name in reason), None)
    if overloaded is None:
        return rejected

    assignments = dict(rejected.assignments)
    old_max = max(_weighted_shares(assignments, weights).values())
    counts: dict[str, int] = {}
    for emp in assignments.values():
        counts[emp] = counts.get(emp, 0) + 1

    roster = list(profiles)
    candidates: list[tuple[float, int, int, str, str]] = []
    for task, emp in assignments.items():
        if emp != overloaded:
            continue
        for recipient in roster:
            if recipient == overloaded:
                continue
            if not _compatible(task, recipient, profiles, skill_map):
                continue
            capacity = profiles[recipient].get("capacity")
            if capacity is not None and counts.get(recipient, 0) + 1 > capacity:
                continue
            trial = {**assignments, task: recipient}
            new_max = max(_weighted_shares(trial, weights).values())
            if new_max <= old_max + 1e-12:
                task_idx = task_order.index(task) if task in task_order else -1
                candidates.append((new_max, -task_idx, roster.index(recipient), task, recipient))
    if not candidates:
        raise NoFeasibleRepair(f"no compatible recipient can relieve {overloaded}")

    _, _, _, task, recipient = min(candidates)
    assignments[task] = recipient
    return Allocation(assignments=assignments, label=_next_label(rejected.label))


# -- deterministic mock engine ---------------------------------------------------


class MockEngine:
    """Rule-following planner for the bundled weather and allocation
    scenarios. One instance per run; its internal allocation state advances
    with verdict feedback, so identical task specs yield identical proposal
    sequences."""

    def __init__(self) -> None:
        self._attempts: list[Allocation] = []
        self._approved: Optional[Allocation] = None
        self._last_repair: Optional[tuple[str, str]] = None  # (task, recipient)

    def next_proposal(self, ctx: CognitionContext) -> CognitionOutput:
        scenario = ctx.task.scenario
        kind = getattr(scenario, "kind", None)
        if kind == "weather":
            return self._weather_step(ctx)
        if kind == "allocation":
            return self._allocation_step(ctx)
        raise EngineFailure(f"mock engine has no planner for scenario kind {kind!r}")

    # Weather: query cities in task order until every record is stored, then
    # emit the branch rule's action, always citing the consulted evidence.
    def _weather_step(self, ctx: CognitionContext) -> CognitionOutput:
        scenario = ctx.task.scenario
        consulted: list[str] = []
        for city in scenario.cities:
            call = ToolCall("get_weather", {"city": city})
            key = canonical_evidence_key(call)
            consulted.append(key)
            if not ctx.memory_view.has_evidence(key):
                return CognitionOutput(
                    reasoning=f"Need weather data for {city}; memory shows no stored record; querying the weather tool.",
                    evidence_refs=(),
                    proposal=call,
                    consulted_keys=tuple(consulted),
                )

        stored = {city: ctx.memory_view.lookup(canonical_evidence_key(ToolCall("get_weather", {"city": city}))) for city in scenario.cities}
        temps = {city: ev.payload["temperature_f"] for city, ev in stored.items()}
        records = {city: ev.payload for city, ev in stored.items()}
        refs = [ev.ref for ev in stored.values()]
        decision = decide_branch(temps, scenario.threshold_f, records)

        if decision.pre_call is not None:
            pre_key = canonical_evidence_key(decision.pre_call)
            consulted.append(pre_key)
            pre_evidence = ctx.memory_view.lookup(pre_key)
            if pre_evidence is None:
                return CognitionOutput(
                    reasoning=f"No cities above {_fmt_temp(scenario.threshold_f)}°F; cancelling the trip before recommending snacks.",
                    evidence_refs=tuple(refs),
                    proposal=decision.pre_call,
                    consulted_keys=tuple(consulted),
                )
            refs.append(pre_evidence.ref)

        return CognitionOutput(
            reasoning=decision.explanation,
            evidence_refs=tuple(refs),
            proposal=decision.final,
            consulted_keys=tuple(consulted),
        )

    # Allocation: gather profiles, propose a first-fit plan, repair on
    # rejection, then draft the summary email once a plan is approved.
    def _allocation_step(self, ctx: CognitionContext) -> CognitionOutput:
        scenario = ctx.task.scenario
        consulted: list[str] = []
        for name in scenario.employees:
            call = ToolCall("get_employee_profile", {"name": name})
            key = canonical_evidence_key(call)
            consulted.append(key)
            if not ctx.memory_view.has_evidence(key):
                return CognitionOutput(
                    reasoning=f"Need {name}'s profile; memory shows no stored record; querying the profile tool.",
                    evidence_refs=(),
                    proposal=call,
                    consulted_keys=tuple(consulted),
                )

        stored = {name: ctx.memory_view.lookup(canonical_evidence_key(ToolCall("get_employee_profile", {"name": name}))) for name in scenario.employees}
        profiles = {name: ev.payload for name, ev in stored.items()}
        refs = tuple(ev.ref for ev in stored.values())

        if self._approved is None and self._attempts and ctx.last_verdict is None:
            self._approved = self._attempts[-1]

        if self._approved is None:
            if ctx.last_verdict is not None and self._attempts:
                previous = self._attempts[-1]
                plan = repair_allocation(
                    previous,
                    ctx.last_verdict.reason,
                    profiles,
                    scenario.weights,
                    skill_map=scenario.skill_map,
                    task_order=scenario.tasks,
                )
                moved = next((t for t in scenario.tasks if plan.assignments[t] != previous.assignments[t]), None)
                if moved is None:
                    reasoning = f"Plan {plan.label}: no overload identified; resubmitting the assignment unchanged."
                else:
                    recipient = plan.assignments[moved]
                    skills = ", ".join(profiles[recipient].get("skills", ())[:1]) or "matching"
                    reasoning = (
                        f"Plan {plan.label}: moved {moved} to {recipient}, who has {skills} expertise and spare capacity, "
                        f"to relieve the rejected overload."
                    )
            else:
                plan = greedy_allocation(scenario.employees, scenario.tasks, scenario.skill_map, profiles, label="A")
                reasoning = "Plan A: first-fit assignment of each task to the first employee whose primary skill matches."
            self._attempts.append(plan)
            return CognitionOutput(
                reasoning=reasoning,
                evidence_refs=refs,
                proposal=plan,
                consulted_keys=tuple(consulted),
            )

        plan = self._approved
        rows = "\n".join(f"| {task} | {plan.assignments[task]} |" for task in scenario.tasks)
        body = (
            "Hello,\n\n"
            "Proposed assignments for the project:\n\n"
            "| Task | Assignee |\n"
            "| --- | --- |\n"
            f"{rows}\n\n"
            "All assignments passed the skill and workload checks.\n"
        )
        draft = Draft(to=scenario.manager_email, subject="Project task assignments", body=body)
        return CognitionOutput(
            reasoning=f"Plan {plan.label} approved; emailing the allocation table ({len(scenario.tasks)} tasks) to {scenario.manager_email}",
            evidence_refs=refs,
            proposal=draft,
            consulted_keys=tuple(consulted),
        )


# -- remote chat-completion adapter ----------------------------------------------

DEFAULT_TEMPERATURE = 0.7

_OUTPUT_INSTRUCTIONS = (
    "Respond with exactly one JSON object and nothing else:\n"
    '{"reasoning": "<why>", "evidence_refs": ["<ref>", ...], "action": <action>}\n'
    "where <action> is one of:\n"
    '  {"type": "tool_call", "tool": "<name>", "args": {...}}\n'
    '  {"type": "final", "tool": "<name>", "args": {...}, "target": "<short label>"}\n'
    '  {"type": "final", "answer": "<text>"}\n'
    '  {"type": "draft", "to": "<addr>", "subject": "<s>", "body": "<b>"}'
)


def memory_digest(view: MemoryView, budget: int = 4000) -> str:
    """Stored evidence as ``ref | key | payload`` lines, most recent first,
    truncated to ``budget`` characters."""
    lines = []
    for evidence in reversed(view.evidence_items()):
        lines.append(f"{evidence.ref} | {evidence.key} | {json.dumps(evidence.payload, ensure_ascii=False)}")
    text = "\n".join(lines)
    return text[:budget]


def build_messages(ctx: CognitionContext, digest_budget: int = 4000) -> list:
    policy_lines = "\n".join(
        f"- {p.id} ({p.type.value}, scope {p.scope.value}, {p.enforcement.value})" for p in ctx.metaprompt.policies
    )
    system = (ctx.metaprompt.directive_text or "You are a governed planning agent.") + (
        "\nActive policies:\n" + policy_lines + "\n\n" + _OUTPUT_INSTRUCTIONS
    )
    user_parts = [f"Task: {ctx.task.description}"]
    digest = memory_digest(ctx.memory_view, digest_budget)
    if digest:
        user_parts.append("Stored evidence (most recent first):\n" + digest)
    if ctx.last_verdict is not None:
        user_parts.append(
            f"Your previous proposal was not executed ({ctx.last_verdict.status.value}): "
            f"{ctx.last_verdict.reason}. Revise and try again."
        )
    user_parts.append(f"This is cycle {ctx.loop_index}. Propose exactly one step.")
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(user_parts)},
    ]


def _extract_json_object(text: str) -> dict:
    candidate = text.strip()
    fence = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", candidate, re.DOTALL)
    if fence:
        candidate = fence.group(1)
    try:
        parsed = json.loads(candidate)
        if isinstance(parsed, dict):
            return parsed
    except json.JSONDecodeError:
        pass
    start = candidate.find("{")
    while start != -1:
        depth = 0
        for i in range(start, len(candidate)):
            if candidate[i] == "{":
                depth += 1
            elif candidate[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        parsed = json.loads(candidate[start:i + 1])
                        if isinstance(parsed, dict):
                            return parsed
                    except json.JSONDecodeError:
                        break
        start = candidate.find("{", start + 1)
    raise SchemaViolation("reply contains no JSON object")


def coerce_model_output(text: str) -> CognitionOutput:
    """Parse a model reply into a proposal. Missing ``evidence_refs`` coerces
    to an empty list (the control gate will reject uncited finals); missing
    reasoning or action is a schema violation."""
    data = _extract_json_object(text)
    reasoning = data.get("reasoning")
    action = data.get("action")
    if not reasoning or not isinstance(reasoning, str):
        raise SchemaViolation("reply missing non-empty 'reasoning'")
    if not isinstance(action, dict):
        raise SchemaViolation("reply missing 'action' object")
    refs = data.get("evidence_refs") or []
    if not isinstance(refs, list):
        raise SchemaViolation("'evidence_refs' must be a list")

    kind = action.get("type")
    proposal: Any
    if kind == "tool_call":
        if not action.get("tool"):
            raise SchemaViolation("tool_call action missing 'tool'")
        proposal = ToolCall(action["tool"], action.get("args") or {})
    elif kind == "final":
        if action.get("answer") is not None:
            proposal = FinalAction.answer(str(action["answer"]))
        elif action.get("tool"):
            call = ToolCall(action["tool"], action.get("args") or {})
            proposal = FinalAction.tool(call, target=action.get("target"))
        else:
            raise SchemaViolation("final action needs 'tool' or 'answer'")
    elif kind == "draft":
        missing = [k for k in ("to", "subject", "body") if not action.get(k)]
        if missing:
            raise SchemaViolation(f"draft action missing {missing}")
        proposal = Draft(to=action["to"], subject=action["subject"], body=action["body"])
    else:
        raise SchemaViolation(f"unknown action type {kind!r}")

    return CognitionOutput(
        reasoning=reasoning,
        evidence_refs=tuple(str(r) for r in refs),
        proposal=proposal,
    )


class RemoteEngine:
    """Adapter for chat-completion endpoints: request {model, messages,
    temperature}, response {choices: [{message: {content}}]}."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        *,
        temperature: float = DEFAULT_TEMPERATURE,
        timeout: float = 30.0,
        schema_retries: int = 2,
        transport_retries: int = 2,
        backoff: float = 0.5,
        session: Optional[requests.Session] = None,
    ):
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._api_key = api_key
        self._model = model
        self._temperature = temperature
        self._timeout = timeout
        self._schema_retries = schema_retries
        self._transport_retries = transport_retries
        self._backoff = backoff
        self._session = session or requests.Session()

    def _complete(self, messages: list) -> str:
        payload = {"model": self._model, "messages": messages, "temperature": self._temperature}
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error: Optional[Exception] = None
        for attempt in range(self._transport_retries + 1):
            try:
                response = self._session.post(self._url, json=payload, headers=headers, timeout=self._timeout)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self._transport_retries:
                    time.sleep(self._backoff * (2 ** attempt))
        raise EngineFailure(f"remote endpoint failed after {self._transport_retries + 1} attempts: {last_error}")

    def next_proposal(self, ctx: CognitionContext) -> CognitionOutput:
        messages = build_messages(ctx)
        last_violation: Optional[SchemaViolation] = None
        for _ in range(self._schema_retries + 1):
            content = self._complete(messages)
            try:
                return coerce_model_output(content)
            except SchemaViolation as exc:
                last_violation = exc
                messages = messages + [
                    {"role": "assistant", "content": content},
                    {"role": "user", "content": f"Invalid reply ({exc}). {_OUTPUT_INSTRUCTIONS}"},
                ]
        raise EngineFailure(f"model reply failed schema coercion after retries: {last_violation}")


def remote_engine_from_env(env: Mapping[str, str]) -> RemoteEngine:
    """Build a RemoteEngine from SCL_REMOTE_* variables; raises EngineFailure
    naming the first missing variable."""
    values = {}
    for name in ("SCL_REMOTE_BASE_URL", "SCL_REMOTE_API_KEY", "SCL_REMOTE_MODEL"):
        value = env.get(name)
        if not value:
            raise EngineFailure(f"missing environment variable {name}")
        values[name] = value
    return RemoteEngine(values["SCL_REMOTE_BASE_URL"], values["SCL_REMOTE_API_KEY"], values["SCL_REMOTE_MODEL"])
