"""Command-line entry points: run experiments, compute metrics, verify audit
logs, and validate policy files.

Exit codes are the machine contract: 0 success, 2 input error, 3 governed
abort (loop bound hit or a trace property violated). Stdout is line-oriented
``key=value``.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .audit import MalformedLog, Metrics, check_trace_properties, compute_metrics, parse_audit, serialize_audit
from .cognition import EngineFailure, MockEngine, remote_engine_from_env
from .metaprompt import PolicyParseError, parse_policy_file
from .orchestrator import InvalidSpec, load_task_file, run
from .tools import default_registry, load_fixture_overrides

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_GOVERNED_ABORT = 3


@dataclass
class RunConfig:
    task_path: str
    out_path: str
    policies_path: Optional[str] = None
    fixtures_path: Optional[str] = None
    memory_path: Optional[str] = None
    engine: str = "mock"
    max_loops: Optional[int] = None
    strict_golden: Optional[str] = None


def _fmt_fraction(value: float) -> str:
    text = f"{value * 100:.1f}".rstrip("0").rstrip(".")
    return f"{text}%"


def cmd_run(config: RunConfig) -> int:
    extra_policies = None
    if config.policies_path:
        try:
            extra_policies = parse_policy_file(Path(config.policies_path).read_text(encoding="utf-8"))
        except OSError as exc:
            print(f"error=cannot read policies file: {exc}")
            return EXIT_INPUT_ERROR
        except PolicyParseError as exc:
            print(f"error=policy parse failed: {exc}")
            return EXIT_INPUT_ERROR

    try:
        spec = load_task_file(config.task_path, extra_policies=extra_policies)
    except InvalidSpec as exc:
        print(f"error=invalid task: {exc}")
        return EXIT_INPUT_ERROR
    if config.max_loops is not None:
        from dataclasses import replace
        spec = replace(spec, max_loops=config.max_loops)
        if spec.max_loops < 1:
            print("error=invalid task: max_loops must be >= 1")
            return EXIT_INPUT_ERROR

    fixtures = None
    if config.fixtures_path:
        try:
            fixtures = load_fixture_overrides(config.fixtures_path)
        except (OSError, ValueError) as exc:
            print(f"error=cannot load fixtures: {exc}")
            return EXIT_INPUT_ERROR

    if config.engine == "remote":
        try:
            engine = remote_engine_from_env(os.environ)
        except EngineFailure as exc:
            print(f"error={exc}")
            return EXIT_INPUT_ERROR
    else:
        engine = MockEngine()

    registry = default_registry(fixtures)
    try:
        log = run(spec, engine, registry, memory_path=config.memory_path)
    except EngineFailure as exc:
        if exc.audit_log is not None:
            Path(config.out_path).write_text(serialize_audit(exc.audit_log), encoding="utf-8")
        print(f"error=engine failure: {exc}")
        return EXIT_INPUT_ERROR

    text = serialize_audit(log)
    Path(config.out_path).write_text(text, encoding="utf-8")
    summary = log.summary
    print(
        f"final_action={summary['final_action']} "
        f"policy_violations={summary['policy_violations']} "
        f"loops={sum(1 for e in log.entries if 'phases' in e)} "
        f"status={summary['status']}"
    )

    if config.strict_golden:
        try:
            golden = Path(config.strict_golden).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"error=cannot read golden file: {exc}")
            return EXIT_INPUT_ERROR
        if golden != text:
            print(f"golden=mismatch path={config.strict_golden}")
            return EXIT_INPUT_ERROR
        print("golden=match")

    if summary["status"] != "completed":
        return EXIT_GOVERNED_ABORT
    return EXIT_OK if summary["policy_violations"] == 0 else EXIT_GOVERNED_ABORT


def _load_audit(path: str):
    try:
        return parse_audit(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error=cannot read audit file: {exc}")
        return None
    except MalformedLog as exc:
        print(f"error=malformed audit log: {exc}")
        return None


def print_metrics(metrics: Metrics) -> None:
    print(f"violations={metrics.policy_violations}")
    print(f"redundant={metrics.redundant_tool_calls}")
    print(f"completeness={_fmt_fraction(metrics.audit_trail_completeness)}")
    print(f"citation={_fmt_fraction(metrics.evidence_citation_rate)}")
    print(f"logic_errors={_fmt_fraction(metrics.conditional_logic_errors)}")
    print(f"drift={metrics.memory_drift_events}")
    print(f"preventions={metrics.preventions}")
    print(f"loops={metrics.loops}")


def cmd_metrics(audit_path: str) -> int:
    log = _load_audit(audit_path)
    if log is None:
        return EXIT_INPUT_ERROR
    try:
        print_metrics(compute_metrics(log))
    except MalformedLog as exc:
        print(f"error=malformed audit log: {exc}")
        return EXIT_INPUT_ERROR
    return EXIT_OK


def cmd_verify(audit_path: str) -> int:
    log = _load_audit(audit_path)
    if log is None:
        return EXIT_INPUT_ERROR
    try:
        results = check_trace_properties(log)
    except MalformedLog as exc:
        print(f"error=malformed audit log: {exc}")
        return EXIT_INPUT_ERROR
    failed = False
    for result in results:
        if result.holds:
            print(f"{result.property_id}=holds")
        else:
            print(f"{result.property_id}=fails@{result.counterexample}")
            failed = True
    return EXIT_GOVERNED_ABORT if failed else EXIT_OK


def cmd_policy_check(policy_path: str) -> int:
    try:
        text = Path(policy_path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error=cannot read policy file: {exc}")
        return EXIT_INPUT_ERROR
    try:
        policies = parse_policy_file(text)
    except PolicyParseError as exc:
        print(f"error=line {exc.line}: {type(exc).__name__}: {exc}")
        return EXIT_INPUT_ERROR
    for policy in policies:
        print(
            f"policy id={policy.id} type={policy.type.value} "
            f"scope={policy.scope.value} enforcement={policy.enforcement.value}"
        )
    print(f"policies={len(policies)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scl", description="Governed agent loop runtime")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a task and write its audit log")
    run_p.add_argument("--task", required=True, help="task file (JSON)")
    run_p.add_argument("--out", required=True, help="audit output path")
    run_p.add_argument("--policies", help="extra policy file (.scp) merged over the builtins")
    run_p.add_argument("--fixtures", help="JSON weather fixture overrides")
    run_p.add_argument("--memory", help="append-only memory store file")
    run_p.add_argument("--engine", choices=("mock", "remote"), default="mock")
    run_p.add_argument("--max-loops", type=int, default=None)
    run_p.add_argument("--strict-golden", help="compare audit bytes against this golden file")

    metrics_p = sub.add_parser("metrics", help="print reliability metrics for an audit log")
    metrics_p.add_argument("audit_path")

    verify_p = sub.add_parser("verify", help="check trace properties on an audit log")
    verify_p.add_argument("audit_path")

    policy_p = sub.add_parser("policy-check", help="parse and print a policy file")
    policy_p.add_argument("policy_path")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(RunConfig(
            task_path=args.task,
            out_path=args.out,
            policies_path=args.policies,
            fixtures_path=args.fixtures,
            memory_path=args.memory,
            engine=args.engine,
            max_loops=args.max_loops,
            strict_golden=args.strict_golden,
        ))
    if args.command == "metrics":
        return cmd_metrics(args.audit_path)
    if args.command == "verify":
        return cmd_verify(args.audit_path)
    if args.command == "policy-check":
        return cmd_policy_check(args.policy_path)
    return EXIT_INPUT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
