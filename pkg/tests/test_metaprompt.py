"""Policy set construction and the policy file grammar."""

import pytest

from scl.metaprompt import (
    DuplicateId,
    Enforcement,
    MetaPrompt,
    MissingField,
    Policy,
    PolicyScope,
    PolicyType,
    UnknownEnforcement,
    UnknownKey,
    UnknownType,
    builtin_policies,
    parse_policy_file,
    serialize_policies,
)

TWO_BLOCK_FILE = """\
- type: evidence_citation
  scope: all_final_actions
  enforcement: reject
- type: redundancy_check
  scope: tool_calls
  enforcement: warn_then_reject
"""


def test_builtin_policies_ids_and_types():
    mp = builtin_policies()
    assert mp.ids() == [
        "must_cite_stored_evidence",
        "no_final_answer_without_control_pass",
        "single_final_action",
    ]
    by_id = {p.id: p for p in mp.policies}
    assert by_id["must_cite_stored_evidence"].type is PolicyType.EVIDENCE_CITATION
    assert by_id["must_cite_stored_evidence"].scope is PolicyScope.ALL_FINAL_ACTIONS
    assert by_id["no_final_answer_without_control_pass"].type is PolicyType.CONTROL_PASS_GATE
    assert by_id["single_final_action"].type is PolicyType.SINGLE_FINAL_ACTION
    assert all(p.enforcement is Enforcement.REJECT for p in mp.policies)


def test_builtin_policies_is_pure():
    assert builtin_policies() == builtin_policies()


def test_merged_preserves_order_and_dedupes():
    parsed = parse_policy_file(TWO_BLOCK_FILE)
    merged = builtin_policies().merged([parsed[1]])
    assert len(merged.policies) == 4
    assert merged.ids()[:3] == builtin_policies().ids()
    assert merged.ids()[3] == "redundancy_check_2"
    again = merged.merged([parsed[1]])
    assert again == merged


def test_parse_two_block_file():
    policies = parse_policy_file(TWO_BLOCK_FILE)
    assert [(p.type, p.scope, p.enforcement) for p in policies] == [
        (PolicyType.EVIDENCE_CITATION, PolicyScope.ALL_FINAL_ACTIONS, Enforcement.REJECT),
        (PolicyType.REDUNDANCY_CHECK, PolicyScope.TOOL_CALLS, Enforcement.WARN_THEN_REJECT),
    ]
    assert [p.id for p in policies] == ["evidence_citation_1", "redundancy_check_2"]


def test_parse_empty_file():
    assert parse_policy_file("") == []
    assert parse_policy_file("# only comments\n\n") == []


def test_unknown_enforcement_names_the_line():
    text = "- type: evidence_citation\n  scope: all_final_actions\n  enforcement: ignore\n"
    with pytest.raises(UnknownEnforcement) as exc:
        parse_policy_file(text)
    assert exc.value.line == 3


def test_unknown_type_names_the_line():
    with pytest.raises(UnknownType) as exc:
        parse_policy_file("- type: mind_reading\n  scope: tool_calls\n  enforcement: reject\n")
    assert exc.value.line == 1


def test_missing_field_rejected():
    with pytest.raises(MissingField):
        parse_policy_file("- type: evidence_citation\n  scope: all_final_actions\n")


def test_unknown_key_rejected():
    with pytest.raises(UnknownKey) as exc:
        parse_policy_file("- type: evidence_citation\n  scope: all_final_actions\n  enforcement: reject\n  priority: 3\n")
    assert exc.value.line == 4


def test_duplicate_id_rejected():
    text = (
        "- type: evidence_citation\n  id: same\n  scope: all_final_actions\n  enforcement: reject\n"
        "- type: redundancy_check\n  id: same\n  scope: tool_calls\n  enforcement: reject\n"
    )
    with pytest.raises(DuplicateId) as exc:
        parse_policy_file(text)
    assert exc.value.line == 6


def test_params_parse_as_scalars():
    text = (
        "- type: fairness_check\n  scope: allocations\n  enforcement: reject\n"
        "  params.max_load_fraction: 0.4\n  params.note: strict cap\n"
    )
    (policy,) = parse_policy_file(text)
    assert policy.params == {"max_load_fraction": 0.4, "note": "strict cap"}


def test_fairness_fraction_validated():
    with pytest.raises(ValueError):
        Policy(id="f", type=PolicyType.FAIRNESS_CHECK, scope=PolicyScope.ALLOCATIONS,
               enforcement=Enforcement.REJECT, params={"max_load_fraction": 1.5})


def test_round_trip_is_stable():
    policies = parse_policy_file(TWO_BLOCK_FILE)
    text = serialize_policies(policies)
    assert parse_policy_file(text) == policies
    assert serialize_policies(parse_policy_file(text)) == text


def test_all_policy_types_are_expressible():
    blocks = []
    scopes = {
        PolicyType.EVIDENCE_CITATION: "all_final_actions",
        PolicyType.REDUNDANCY_CHECK: "tool_calls",
        PolicyType.SINGLE_FINAL_ACTION: "all_final_actions",
        PolicyType.CONTROL_PASS_GATE: "all_final_actions",
        PolicyType.FAIRNESS_CHECK: "allocations",
        PolicyType.REQUIRED_CONTENT: "communications",
    }
    for ptype, scope in scopes.items():
        blocks.append(f"- type: {ptype.value}\n  scope: {scope}\n  enforcement: reject\n")
    policies = parse_policy_file("".join(blocks))
    assert {p.type for p in policies} == set(PolicyType)


def test_duplicate_ids_rejected_in_metaprompt():
    p = builtin_policies().policies[0]
    with pytest.raises(ValueError):
        MetaPrompt((p, p))
