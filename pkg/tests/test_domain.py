"""Canonicalization and shared value types."""

import random
import string

import pytest

from scl.domain import (
    EVIDENCE_REF_PATTERN,
    FinalAction,
    ToolCall,
    canonical_evidence_key,
    make_evidence_ref,
    short_label,
)


def test_canonical_key_matches_stored_form():
    call = ToolCall("get_weather", {"city": "San Francisco"})
    assert canonical_evidence_key(call) == 'evidence_get_weather_{"city":"San Francisco"}'


def test_canonical_key_empty_args():
    assert canonical_evidence_key(ToolCall("get_weather")) == "evidence_get_weather_{}"


def test_canonical_key_ignores_argument_order():
    a = ToolCall("send_email", {"to": "a@b", "subject": "x"})
    b = ToolCall("send_email", {"subject": "x", "to": "a@b"})
    assert canonical_evidence_key(a) == canonical_evidence_key(b)


def test_canonical_key_idempotent():
    call = ToolCall("get_weather", {"city": "Miami"})
    assert canonical_evidence_key(call) == canonical_evidence_key(call)


@pytest.mark.parametrize(
    "category, slug_source, seq, expected",
    [
        ("wx", "San Francisco", 1, "wx-sanfrancisco-001"),
        ("wx", "Miami", 1, "wx-miami-001"),
        ("emp", "Dana", 4, "emp-dana-004"),
    ],
)
def test_make_evidence_ref(category, slug_source, seq, expected):
    assert make_evidence_ref(category, slug_source, seq) == expected


def test_evidence_ref_rejects_zero_seq():
    with pytest.raises(ValueError):
        make_evidence_ref("wx", "Oslo", 0)


def test_evidence_ref_grammar_holds_for_arbitrary_inputs():
    rng = random.Random(20250810)
    alphabet = string.ascii_letters + string.digits + " -_.@/°"
    for _ in range(500):
        category = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 6)))
        slug = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 24)))
        seq = rng.randint(1, 999)
        assert EVIDENCE_REF_PATTERN.match(make_evidence_ref(category, slug, seq))


def test_tool_call_requires_name():
    with pytest.raises(ValueError):
        ToolCall("")


def test_final_action_variants_are_exclusive():
    call = ToolCall("generate_image", {"description": "x"})
    assert FinalAction.tool(call).call is call
    assert FinalAction.answer("go").answer_text == "go"
    with pytest.raises(ValueError):
        FinalAction("tool_backed")
    with pytest.raises(ValueError):
        FinalAction("answer_only", call=call, answer_text="both")


def test_final_action_describe_uses_target_then_primary_arg():
    call = ToolCall("generate_image", {"description": "San Francisco weather: Partly Cloudy, 64°F"})
    assert FinalAction.tool(call, target="San Francisco").describe() == "generate_image(San Francisco)"
    assert FinalAction.tool(call).describe() == "generate_image(San Francisco weather: Partly Cloudy, 64°F)"
    assert FinalAction.answer("Travel to Atlanta").describe() == "answer(Travel to Atlanta)"


def test_short_label():
    assert short_label("San Francisco") == "SF"
    assert short_label("Miami") == "Miami"
    assert short_label("New York City") == "NYC"
