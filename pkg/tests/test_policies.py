"""Static and rule-based policy behavior."""

import pytest

from trustdial.game import ProactiveAction
from trustdial.policies import (
    DEFAULT_RULE_TABLE,
    DialogState,
    RuleBasedPolicy,
    load_rule_table,
    rule_based_policy,
    save_rule_table,
    static_policy,
)


def _states():
    for step in (1, 5, 12):
        for cx in range(1, 6):
            for trust in range(1, 6):
                for success in (0, 20, 40):
                    yield DialogState(step, cx, trust, success, 42.0)


def test_static_policy_is_constant():
    for action in ProactiveAction:
        policy = static_policy(action)
        assert policy.name == action.label
        assert all(policy.decide(s) is action for s in _states())


def test_static_policy_full_game_counts():
    policy = static_policy(ProactiveAction.INTERVENTION)
    actions = [policy.decide(DialogState(i, 3, 3, 20, 42.0)) for i in range(1, 13)]
    assert actions.count(ProactiveAction.INTERVENTION) == 12


def test_rule_table_endpoints():
    policy = rule_based_policy()
    for cx in range(1, 6):
        assert policy.decide(DialogState(1, cx, 1, 20, 42.0)) is ProactiveAction.NONE
        assert policy.decide(DialogState(1, cx, 2, 20, 42.0)) is ProactiveAction.NONE
        assert policy.decide(DialogState(1, cx, 3, 20, 42.0)) is ProactiveAction.NOTIFICATION
    assert policy.decide(DialogState(1, 2, 4, 20, 42.0)) is ProactiveAction.NOTIFICATION
    assert policy.decide(DialogState(1, 3, 4, 20, 42.0)) is ProactiveAction.SUGGESTION
    assert policy.decide(DialogState(1, 3, 5, 20, 42.0)) is ProactiveAction.SUGGESTION
    assert policy.decide(DialogState(1, 4, 5, 20, 42.0)) is ProactiveAction.INTERVENTION
    assert policy.decide(DialogState(1, 5, 5, 20, 42.0)) is ProactiveAction.INTERVENTION


def test_rule_table_monotone_in_trust():
    """For fixed complexity, more trust never yields a less intrusive act."""
    policy = rule_based_policy()
    for cx in range(1, 6):
        last = ProactiveAction.NONE
        for trust in range(1, 6):
            action = policy.decide(DialogState(1, cx, trust, 20, 42.0))
            assert action >= last
            last = action


def test_rule_decide_ignores_step_and_success():
    policy = rule_based_policy()
    a = policy.decide(DialogState(1, 3, 4, 0, 5.0))
    b = policy.decide(DialogState(12, 3, 4, 40, 500.0))
    assert a is b


def test_rule_table_shape_validation():
    with pytest.raises(ValueError):
        RuleBasedPolicy(tuple(DEFAULT_RULE_TABLE[:4]))


def test_rule_table_roundtrip(tmp_path):
    path = tmp_path / "rules.json"
    save_rule_table(rule_based_policy(), path)
    loaded = load_rule_table(path)
    assert loaded.table == DEFAULT_RULE_TABLE


def test_dialog_state_validation():
    with pytest.raises(ValueError):
        DialogState(0, 3, 3, 20, 42.0)
    with pytest.raises(ValueError):
        DialogState(1, 6, 3, 20, 42.0)
    with pytest.raises(ValueError):
        DialogState(1, 3, 0, 20, 42.0)
    with pytest.raises(ValueError):
        DialogState(1, 3, 3, 25, 42.0)
    with pytest.raises(ValueError):
        DialogState(1, 3, 3, 20, 0.0)


def test_initial_state_neutral_defaults():
    state = DialogState.initial(complexity=4)
    assert state.step_index == 1
    assert state.complexity == 4
    assert state.trust_est == 3
    assert state.last_success == 20
    assert state.last_duration_s > 0
