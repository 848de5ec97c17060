"""Shared vocabulary types and canonicalization rules used by every other module.

Everything here is an immutable value, safe to share across threads. The
canonical text forms (evidence keys, evidence reference ids) are part of the
on-disk audit format and must stay byte-stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Union

# Evidence keys and reference ids are plain strings with a fixed grammar.
EvidenceKey = str
EvidenceRef = str

EVIDENCE_REF_PATTERN = re.compile(r"^[a-z0-9]+-[a-z0-9]+-[0-9]{3}$")


@dataclass(frozen=True)
class ToolCall:
    """A proposed invocation of a registered tool.

    ``args`` preserves insertion order for display purposes; canonicalization
    sorts keys, so argument order never affects identity.
    """

    tool_name: str
    args: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.tool_name:
            raise ValueError("tool_name must be non-empty")
        object.__setattr__(self, "args", dict(self.args))

    def primary_arg(self) -> Optional[Any]:
        """First argument value, used for loop labels and display."""
        return next(iter(self.args.values()), None)

    def describe(self) -> str:
        inner = ", ".join(f'{k}="{v}"' for k, v in self.args.items())
        return f"{self.tool_name}({inner})"


class FinalActionKind(str, Enum):
    TOOL_BACKED = "tool_backed"
    ANSWER_ONLY = "answer_only"


@dataclass(frozen=True)
class FinalAction:
    """The single terminal action that concludes a task run.

    Exactly one variant is populated: ``call`` for tool-backed actions,
    ``answer_text`` for plain answers. ``target`` is an optional short display
    argument used when formatting the audit summary (for example the chosen
    destination rather than a full image description).
    """

    kind: FinalActionKind
    call: Optional[ToolCall] = None
    answer_text: Optional[str] = None
    target: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is FinalActionKind.TOOL_BACKED:
            if self.call is None or self.answer_text is not None:
                raise ValueError("tool_backed requires call and no answer_text")
        elif self.kind is FinalActionKind.ANSWER_ONLY:
            if self.answer_text is None or self.call is not None:
                raise ValueError("answer_only requires answer_text and no call")

    @classmethod
    def tool(cls, call: ToolCall, target: Optional[str] = None) -> "FinalAction":
        return cls(FinalActionKind.TOOL_BACKED, call=call, target=target)

    @classmethod
    def answer(cls, text: str) -> "FinalAction":
        return cls(FinalActionKind.ANSWER_ONLY, answer_text=text)

    def describe(self) -> str:
        """Summary form ``<tool>(<primary-arg>)`` or ``answer(<text>)``."""
        if self.kind is FinalActionKind.ANSWER_ONLY:
            return f"answer({self.answer_text})"
        assert self.call is not None
        shown = self.target if self.target is not None else self.call.primary_arg()
        return f"{self.call.tool_name}({'' if shown is None else shown})"


@dataclass(frozen=True)
class Draft:
    """A communication draft (email) awaiting content validation."""

    to: str
    subject: str
    body: str


@dataclass(frozen=True)
class Allocation:
    """A proposed assignment of every project task to one employee."""

    assignments: Mapping[str, str]
    label: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignments", dict(self.assignments))


Proposal = Union[ToolCall, FinalAction, Draft, Allocation]


class VerdictStatus(str, Enum):
    PASS = "PASS"
    WARN = "WARN"
    FAIL = "FAIL"


@dataclass(frozen=True)
class ControlVerdict:
    """Outcome of validating one proposal against the active policies."""

    status: VerdictStatus
    policy_id: Optional[str]
    reason: str
    loop_index: int = 0

    def __post_init__(self) -> None:
        if self.status is not VerdictStatus.PASS:
            if not self.policy_id or not self.reason:
                raise ValueError("WARN/FAIL verdicts carry a policy_id and reason")


@dataclass(frozen=True)
class CognitionOutput:
    """One cycle's proposal: reasoning, cited evidence, and the proposed step."""

    reasoning: str
    evidence_refs: tuple = ()
    proposal: Proposal = None  # type: ignore[assignment]
    consulted_keys: tuple = ()

    def __post_init__(self) -> None:
        if not self.reasoning:
            raise ValueError("reasoning must be non-empty")
        if self.proposal is None:
            raise ValueError("proposal is required")
        object.__setattr__(self, "evidence_refs", tuple(self.evidence_refs))
        object.__setattr__(self, "consulted_keys", tuple(self.consulted_keys))


def canonical_args(args: Mapping[str, Any]) -> str:
    """Argument map serialized with sorted keys and no whitespace."""
    return json.dumps(dict(args), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_evidence_key(call: ToolCall) -> EvidenceKey:
    """Deterministic store key: identical calls yield identical keys
    regardless of argument insertion order."""
    return f"evidence_{call.tool_name}_{canonical_args(call.args)}"


def slugify(text: str) -> str:
    """Lowercase with non-alphanumerics removed; never empty."""
    return re.sub(r"[^a-z0-9]", "", text.lower()) or "x"


def make_evidence_ref(category: str, slug_source: str, seq: int) -> EvidenceRef:
    """Citable reference id of the form ``<category>-<slug>-<seq3>``."""
    if seq < 1:
        raise ValueError("seq must be >= 1")
    return f"{slugify(category)}-{slugify(slug_source)}-{seq:03d}"


def short_label(name: str) -> str:
    """Compact display label: initials for multi-word names ("San Francisco"
    becomes "SF"), single words unchanged."""
    words = name.split()
    if len(words) > 1:
        return "".join(w[0].upper() for w in words)
    return name
