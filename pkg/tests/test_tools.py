"""Tool registry and the bundled deterministic tool suite."""

import json
import subprocess
import sys

import pytest

from scl.domain import ToolCall
from scl.tools import (
    ArgSchemaViolation,
    ArgSpec,
    DuplicateTool,
    ToolRegistry,
    ToolSpec,
    UnknownTool,
    default_registry,
    load_fixture_overrides,
    weather_record,
)


def test_register_and_duplicate():
    registry = ToolRegistry()
    spec = ToolSpec("get_weather", "wx", {"city": ArgSpec("text")})
    registry.register(spec, lambda args: {})
    assert registry.names() == ["get_weather"]
    with pytest.raises(DuplicateTool):
        registry.register(spec, lambda args: {})


def test_default_registry_lists_seven_tools_in_order():
    assert default_registry().names() == [
        "get_weather",
        "send_email",
        "generate_image",
        "cancel_trip",
        "recommend_snacks",
        "check_umbrella_needed",
        "get_employee_profile",
    ]


@pytest.mark.parametrize(
    "city, expected",
    [
        ("San Francisco", {"city": "San Francisco", "temperature_f": 64, "condition": "Partly Cloudy", "precipitation_chance": 11}),
        ("Miami", {"city": "Miami", "temperature_f": 90, "condition": "Sunny", "precipitation_chance": 49}),
        ("Atlanta", {"city": "Atlanta", "temperature_f": 73, "condition": "Clear", "precipitation_chance": 46}),
    ],
)
def test_known_city_weather(city, expected):
    result = default_registry().execute(ToolCall("get_weather", {"city": city}))
    assert result.payload == expected
    assert result.category == "wx"


def test_unknown_city_weather_is_deterministic_and_in_range():
    registry = default_registry()
    first = registry.execute(ToolCall("get_weather", {"city": "Oslo"})).payload
    second = registry.execute(ToolCall("get_weather", {"city": "Oslo"})).payload
    assert first == second
    assert 40 <= first["temperature_f"] <= 100
    assert 0 <= first["precipitation_chance"] <= 99
    assert first["condition"]
    # Stable across processes too: the record may not depend on hash seeding.
    code = (
        "from scl.tools import weather_record; import json; "
        "print(json.dumps(weather_record('Oslo'), sort_keys=True))"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout) == first


def test_effect_mocks():
    registry = default_registry()
    email = registry.execute(ToolCall("send_email", {"to": "test-scl@test.com", "body": "hi"}))
    assert email.payload == {"status": "queued", "to": "test-scl@test.com"}
    image = registry.execute(ToolCall("generate_image", {"description": "San Francisco weather: Partly Cloudy, 64°F"}))
    assert image.payload["status"] == "rendered"
    assert registry.execute(ToolCall("cancel_trip")).payload == {"status": "cancelled"}
    snacks = registry.execute(ToolCall("recommend_snacks")).payload["snacks"]
    assert len(snacks) == 5 and all(snacks)


def test_umbrella_threshold_rule():
    registry = default_registry()
    assert registry.execute(ToolCall("check_umbrella_needed", {"city": "Miami"})).payload["needed"] is True  # 49 > 30
    assert registry.execute(ToolCall("check_umbrella_needed", {"city": "San Francisco"})).payload["needed"] is False  # 11
    lenient = default_registry(umbrella_threshold=50)
    assert lenient.execute(ToolCall("check_umbrella_needed", {"city": "Miami"})).payload["needed"] is False


def test_employee_profiles():
    registry = default_registry()
    alice = registry.execute(ToolCall("get_employee_profile", {"name": "Alice"})).payload
    assert alice == {"skills": ["data analysis", "statistics"], "capacity": 2}
    dana = registry.execute(ToolCall("get_employee_profile", {"name": "Dana"})).payload
    assert dana["skills"] == ["frontend", "React"]
    assert registry.execute(ToolCall("get_employee_profile", {"name": "Zed"})).payload == {"skills": [], "capacity": 2}


def test_unknown_tool_and_schema_violations():
    registry = default_registry()
    with pytest.raises(UnknownTool):
        registry.execute(ToolCall("book_flight", {"to": "Oslo"}))
    with pytest.raises(ArgSchemaViolation):
        registry.execute(ToolCall("get_weather"))  # missing required city
    with pytest.raises(ArgSchemaViolation):
        registry.execute(ToolCall("get_weather", {"city": 42}))  # wrong type
    with pytest.raises(ArgSchemaViolation):
        registry.execute(ToolCall("get_weather", {"city": "Oslo", "when": "now"}))  # unknown arg


def test_fixture_overrides(tmp_path):
    path = tmp_path / "fixtures.json"
    path.write_text(json.dumps({"San Francisco": {"temperature_f": 39}}), encoding="utf-8")
    overrides = load_fixture_overrides(path)
    record = weather_record("San Francisco", overrides)
    assert record["temperature_f"] == 39
    assert record["condition"] == "Partly Cloudy"  # untouched fields keep defaults
    registry = default_registry(overrides)
    assert registry.execute(ToolCall("get_weather", {"city": "San Francisco"})).payload["temperature_f"] == 39

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"San Francisco": 39}), encoding="utf-8")
    with pytest.raises(ValueError):
        load_fixture_overrides(bad)
