"""Governed agent loop runtime.

A one-time retrieval/initialization phase feeds a recurrent cycle of
cognition, control, action, and memory. A persistent policy set (the
metaprompt) is enforced programmatically by the control gate before any
action executes, and every phase of every loop lands in a deterministic,
machine-readable audit log.
"""

from .audit import AuditLog, Metrics, PropertyResult, check_trace_properties, compute_metrics, parse_audit, serialize_audit
from .cognition import (
    Branch,
    BranchDecision,
    CognitionContext,
    EngineFailure,
    MockEngine,
    NoFeasibleRepair,
    RemoteEngine,
    coerce_model_output,
    decide_branch,
    greedy_allocation,
    repair_allocation,
)
from .control import RunState, check_evidence_citation, check_fairness, check_redundancy, check_required_content, validate
from .domain import (
    Allocation,
    CognitionOutput,
    ControlVerdict,
    Draft,
    FinalAction,
    FinalActionKind,
    ToolCall,
    VerdictStatus,
    canonical_evidence_key,
    make_evidence_ref,
    short_label,
)
from .memory import Evidence, MemoryStore, MemoryView, Phase, RejectionRecord, TraceEntry
from .metaprompt import (
    Enforcement,
    MetaPrompt,
    Policy,
    PolicyScope,
    PolicyType,
    builtin_policies,
    parse_policy_file,
    serialize_policies,
)
from .orchestrator import AllocationScenario, InitResult, InvalidSpec, TaskSpec, WeatherScenario, initialize_context, load_task_file, run
from .tools import ToolRegistry, ToolResult, ToolSpec, default_registry

__version__ = "0.1.0"
