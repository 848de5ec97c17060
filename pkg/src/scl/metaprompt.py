"""Persistent governance policies and the structured policy file format.

A MetaPrompt is the ordered set of symbolic constraints enforced on every
cognition proposal for the whole run. Policies can be built in, embedded in a
task file, or loaded from a ``.scp`` policy file written in a small
line-oriented block grammar:

    # comment
    - type: evidence_citation
      scope: all_final_actions
      enforcement: reject

Each block starts with ``- type:``, followed by ``scope:``, ``enforcement:``,
an optional ``id:`` and optional ``params.<name>: <value>`` lines. The parser
is total: every input yields either a policy sequence or exactly one error
naming the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional


class PolicyType(str, Enum):
    EVIDENCE_CITATION = "evidence_citation"
    REDUNDANCY_CHECK = "redundancy_check"
    SINGLE_FINAL_ACTION = "single_final_action"
    CONTROL_PASS_GATE = "control_pass_gate"
    FAIRNESS_CHECK = "fairness_check"
    REQUIRED_CONTENT = "required_content"


class PolicyScope(str, Enum):
    ALL_FINAL_ACTIONS = "all_final_actions"
    TOOL_CALLS = "tool_calls"
    ALLOCATIONS = "allocations"
    COMMUNICATIONS = "communications"


class Enforcement(str, Enum):
    REJECT = "reject"
    # First offense per (policy, run) warns and bounces the proposal back to
    # cognition; any subsequent offense rejects.
    WARN_THEN_REJECT = "warn_then_reject"


@dataclass(frozen=True)
class Policy:
    id: str
    type: PolicyType
    scope: PolicyScope
    enforcement: Enforcement
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("policy id must be non-empty")
        # Accept plain strings (task files, tests) and normalize to enums.
        object.__setattr__(self, "type", PolicyType(self.type))
        object.__setattr__(self, "scope", PolicyScope(self.scope))
        object.__setattr__(self, "enforcement", Enforcement(self.enforcement))
        object.__setattr__(self, "params", dict(self.params))
        if self.type is PolicyType.FAIRNESS_CHECK:
            frac = self.params.get("max_load_fraction")
            if frac is not None and not (0 < float(frac) <= 1):
                raise ValueError("fairness_check max_load_fraction must be in (0, 1]")


@dataclass(frozen=True)
class MetaPrompt:
    """Immutable, ordered policy set plus optional free-text directives for
    remote cognition engines. Order defines check order."""

    policies: tuple = ()
    directive_text: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "policies", tuple(self.policies))
        seen = set()
        for p in self.policies:
            if p.id in seen:
                raise ValueError(f"duplicate policy id: {p.id}")
            seen.add(p.id)

    def ids(self) -> list:
        return [p.id for p in self.policies]

    def merged(self, extra: Iterable[Policy]) -> "MetaPrompt":
        """Union by id, existing order preserved, new policies appended."""
        known = {p.id for p in self.policies}
        added = [p for p in extra if p.id not in known]
        return MetaPrompt(self.policies + tuple(added), self.directive_text)


def builtin_policies() -> MetaPrompt:
    """The three policies active on every governed run."""
    return MetaPrompt(
        (
            Policy(
                id="must_cite_stored_evidence",
                type=PolicyType.EVIDENCE_CITATION,
                scope=PolicyScope.ALL_FINAL_ACTIONS,
                enforcement=Enforcement.REJECT,
            ),
            Policy(
                id="no_final_answer_without_control_pass",
                type=PolicyType.CONTROL_PASS_GATE,
                scope=PolicyScope.ALL_FINAL_ACTIONS,
                enforcement=Enforcement.REJECT,
            ),
            Policy(
                id="single_final_action",
                type=PolicyType.SINGLE_FINAL_ACTION,
                scope=PolicyScope.ALL_FINAL_ACTIONS,
                enforcement=Enforcement.REJECT,
            ),
        )
    )


class PolicyParseError(ValueError):
    """Base for located policy-file errors; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownType(PolicyParseError):
    pass


class UnknownScope(PolicyParseError):
    pass


class UnknownEnforcement(PolicyParseError):
    pass


class MissingField(PolicyParseError):
    pass


class DuplicateId(PolicyParseError):
    pass


class UnknownKey(PolicyParseError):
    pass


_BLOCK_KEYS = {"id", "scope", "enforcement"}


def _parse_scalar(raw: str) -> Any:
    text = raw.strip()
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    return text


def parse_policy_file(text: str) -> list:
    """Parse the block grammar into a policy sequence.

    Indentation-insensitive. Ids default to ``<type>_<index>`` with the
    1-based block index unless an ``id:`` line is present.
    """
    blocks: list[dict] = []
    current: Optional[dict] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("- type:"):
            current = {"line": lineno, "type": (line[len("- type:"):].strip(), lineno), "fields": {}, "params": {}}
            blocks.append(current)
            continue
        if ":" not in line:
            raise UnknownKey(lineno, f"expected 'key: value', got {line!r}")
        key, value = (part.strip() for part in line.split(":", 1))
        if current is None:
            raise UnknownKey(lineno, f"{key!r} appears before any '- type:' block")
        if key in _BLOCK_KEYS:
            current["fields"][key] = (value, lineno)
        elif key.startswith("params."):
            current["params"][key[len("params."):]] = _parse_scalar(value)
        else:
            raise UnknownKey(lineno, f"unknown key {key!r}")

    policies: list[Policy] = []
    seen_ids: dict[str, int] = {}
    for index, block in enumerate(blocks, start=1):
        type_text, type_line = block["type"]
        try:
            ptype = PolicyType(type_text)
        except ValueError:
            raise UnknownType(type_line, f"unknown policy type {type_text!r}") from None
        fields = block["fields"]
        for required in ("scope", "enforcement"):
            if required not in fields:
                raise MissingField(block["line"], f"policy block missing {required!r}")
        scope_text, scope_line = fields["scope"]
        try:
            scope = PolicyScope(scope_text)
        except ValueError:
            raise UnknownScope(scope_line, f"unknown scope {scope_text!r}") from None
        enf_text, enf_line = fields["enforcement"]
        try:
            enforcement = Enforcement(enf_text)
        except ValueError:
            raise UnknownEnforcement(enf_line, f"unknown enforcement {enf_text!r}") from None
        pid, pid_line = fields.get("id", (f"{ptype.value}_{index}", block["line"]))
        if pid in seen_ids:
            raise DuplicateId(pid_line, f"policy id {pid!r} already defined on line {seen_ids[pid]}")
        seen_ids[pid] = pid_line
        try:
            policies.append(Policy(id=pid, type=ptype, scope=scope, enforcement=enforcement, params=block["params"]))
        except ValueError as exc:
            raise PolicyParseError(block["line"], str(exc)) from None
    return policies


def serialize_policies(policies: Iterable[Policy]) -> str:
    """Render policies back into the block grammar; reparses to an equal
    sequence."""
    lines: list[str] = []
    for policy in policies:
        lines.append(f"- type: {policy.type.value}")
        lines.append(f"  id: {policy.id}")
        lines.append(f"  scope: {policy.scope.value}")
        lines.append(f"  enforcement: {policy.enforcement.value}")
        for name in sorted(policy.params):
            lines.append(f"  params.{name}: {policy.params[name]}")
    return "\n".join(lines) + ("\n" if lines else "")
