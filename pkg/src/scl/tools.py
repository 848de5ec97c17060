"""Tool registry and the bundled deterministic tool suite.

Tools are recorded-effect mocks: no network, fully deterministic for every
argument value, in one process and across processes. The registry is the
action phase's only execution surface and is immutable after startup.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from .domain import ToolCall


@dataclass(frozen=True)
class ArgSpec:
    type: str  # "text" or "number"
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    category: str  # short tag used for evidence reference ids
    arg_schema: Mapping[str, ArgSpec] = field(default_factory=dict)
    # Optional (args, payload, ref) -> dict used for compact audit entries.
    summarize: Optional[Callable[[Mapping[str, Any], Any, str], dict]] = None

    def __post_init__(self) -> None:
        if not self.name or not self.category:
            raise ValueError("tool name and category must be non-empty")
        object.__setattr__(self, "arg_schema", dict(self.arg_schema))


@dataclass(frozen=True)
class ToolResult:
    payload: Any
    category: str


class DuplicateTool(Exception):
    pass


class UnknownTool(Exception):
    pass


class ArgSchemaViolation(Exception):
    pass


class ToolRegistry:
    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._executors: dict[str, Callable[[Mapping[str, Any]], Any]] = {}

    def register(self, spec: ToolSpec, executor: Callable[[Mapping[str, Any]], Any]) -> None:
        if spec.name in self._specs:
            raise DuplicateTool(spec.name)
        self._specs[spec.name] = spec
        self._executors[spec.name] = executor

    def names(self) -> list:
        return list(self._specs)  # registration order

    def get(self, name: str) -> Optional[ToolSpec]:
        return self._specs.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def execute(self, call: ToolCall) -> ToolResult:
        spec = self._specs.get(call.tool_name)
        if spec is None:
            raise UnknownTool(call.tool_name)
        self._check_args(spec, call.args)
        payload = self._executors[call.tool_name](dict(call.args))
        return ToolResult(payload=payload, category=spec.category)

    @staticmethod
    def _check_args(spec: ToolSpec, args: Mapping[str, Any]) -> None:
        for name, arg in spec.arg_schema.items():
            if name not in args:
                if arg.required:
                    raise ArgSchemaViolation(f"{spec.name}: missing required argument {name!r}")
                continue
            value = args[name]
            if arg.type == "text" and not isinstance(value, str):
                raise ArgSchemaViolation(f"{spec.name}: argument {name!r} must be text")
            if arg.type == "number" and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ArgSchemaViolation(f"{spec.name}: argument {name!r} must be a number")
        for name in args:
            if name not in spec.arg_schema:
                raise ArgSchemaViolation(f"{spec.name}: unknown argument {name!r}")


# -- bundled mock tools -------------------------------------------------------

WEATHER_FIXTURES: dict[str, dict] = {
    "San Francisco": {"city": "San Francisco", "temperature_f": 64, "condition": "Partly Cloudy", "precipitation_chance": 11},
    "Miami": {"city": "Miami", "temperature_f": 90, "condition": "Sunny", "precipitation_chance": 49},
    "Atlanta": {"city": "Atlanta", "temperature_f": 73, "condition": "Clear", "precipitation_chance": 46},
}

_CONDITION_CYCLE = ("Sunny", "Partly Cloudy", "Clear", "Overcast")

SNACK_LIST = ("trail mix", "seaweed chips", "dark chocolate pretzels", "rice crackers", "yuzu gummies")

EMPLOYEE_PROFILES: dict[str, dict] = {
    "Alice": {"skills": ["data analysis", "statistics"], "capacity": 2},
    "Bob": {"skills": ["UX design", "prototyping"], "capacity": 2},
    "Charlie": {"skills": ["backend", "APIs"], "capacity": 2},
    "Dana": {"skills": ["frontend", "React"], "capacity": 2},
}


def _stable_hash(text: str) -> int:
    # Process-independent, unlike hash(); the synthetic records must be
    # identical across runs and platforms.
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def weather_record(city: str, overrides: Optional[Mapping[str, Mapping]] = None) -> dict:
    """Fixture record for known cities, stable synthetic record otherwise."""
    base = WEATHER_FIXTURES.get(city)
    if base is None:
        h = _stable_hash(city.lower())
        base = {
            "city": city,
            "temperature_f": 40 + h % 61,
            "condition": _CONDITION_CYCLE[h % len(_CONDITION_CYCLE)],
            "precipitation_chance": h % 100,
        }
    if overrides and city in overrides:
        base = {**base, **overrides[city]}
    return dict(base)


def load_fixture_overrides(path: str | Path) -> dict:
    """Load a JSON city -> weather-record override map."""
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
        raise ValueError("fixture file must map city names to record objects")
    return data


def default_registry(
    fixture_overrides: Optional[Mapping[str, Mapping]] = None,
    umbrella_threshold: int = 30,
) -> ToolRegistry:
    """Registry with the seven bundled tools in their canonical order."""
    registry = ToolRegistry()

    def weather_summary(args: Mapping[str, Any], payload: Any, ref: str) -> dict:
        return {"city": args["city"], "temp_F": payload["temperature_f"], "ref": ref}

    def profile_summary(args: Mapping[str, Any], payload: Any, ref: str) -> dict:
        return {"name": args["name"], "capacity": payload["capacity"], "ref": ref}

    registry.register(
        ToolSpec("get_weather", "wx", {"city": ArgSpec("text")}, summarize=weather_summary),
        lambda args: weather_record(args["city"], fixture_overrides),
    )
    registry.register(
        ToolSpec("send_email", "mail", {
            "to": ArgSpec("text"),
            "subject": ArgSpec("text", required=False),
            "body": ArgSpec("text", required=False),
        }),
        lambda args: {"status": "queued", "to": args["to"]},
    )
    registry.register(
        ToolSpec("generate_image", "img", {"description": ArgSpec("text")}),
        lambda args: {"status": "rendered", "description": args["description"]},
    )
    registry.register(
        ToolSpec("cancel_trip", "trip"),
        lambda args: {"status": "cancelled"},
    )
    registry.register(
        ToolSpec("recommend_snacks", "snk"),
        lambda args: {"snacks": list(SNACK_LIST)},
    )
    registry.register(
        ToolSpec("check_umbrella_needed", "umb", {"city": ArgSpec("text")}),
        lambda args: {
            "city": args["city"],
            "needed": weather_record(args["city"], fixture_overrides)["precipitation_chance"] > umbrella_threshold,
        },
    )
    registry.register(
        ToolSpec("get_employee_profile", "emp", {"name": ArgSpec("text")}, summarize=profile_summary),
        lambda args: dict(EMPLOYEE_PROFILES.get(args["name"], {"skills": [], "capacity": 2})),
    )
    return registry
