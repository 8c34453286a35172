"""Dialog policies: the decision interface plus all non-learned baselines."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol

from .game import ProactiveAction

# Neutral defaults for the first exchange, before any outcome exists.
INITIAL_TRUST_EST = 3
INITIAL_SUCCESS = 20
INITIAL_DURATION_S = 90.0


@dataclass(frozen=True)
class DialogState:
    """The agent-visible state of one exchange."""

    step_index: int        # 1..12
    complexity: int        # 1..5
    trust_est: int         # 1..5
    last_success: int      # 0, 10, 20, 30, 40
    last_duration_s: float

    def __post_init__(self):
        if not 1 <= self.step_index <= 12:
            raise ValueError(f"step_index {self.step_index} outside 1..12")
        if not 1 <= self.complexity <= 5:
            raise ValueError(f"complexity {self.complexity} outside 1..5")
        if not 1 <= self.trust_est <= 5:
            raise ValueError(f"trust_est {self.trust_est} outside 1..5")
        if self.last_success not in (0, 10, 20, 30, 40):
            raise ValueError(f"last_success {self.last_success} invalid")
        if self.last_duration_s <= 0:
            raise ValueError("last_duration_s must be positive")

    @staticmethod
    def initial(complexity: int) -> "DialogState":
        return DialogState(
            step_index=1,
            complexity=complexity,
            trust_est=INITIAL_TRUST_EST,
            last_success=INITIAL_SUCCESS,
            last_duration_s=INITIAL_DURATION_S,
        )


class Policy(Protocol):
    name: str

    def decide(self, state: DialogState) -> ProactiveAction: ...


class StaticPolicy:
    """Always plays one proactive dialog act."""

    def __init__(self, action: ProactiveAction):
        self.action = action
        self.name = action.label

    def decide(self, state: DialogState) -> ProactiveAction:
        return self.action


def static_policy(action: ProactiveAction) -> StaticPolicy:
    return StaticPolicy(action)


# Default rule table: rows = estimated trust 1..5, columns = complexity 1..5.
# Cautious at low trust, selectively intrusive only when trust is high and
# the step is complex.
DEFAULT_RULE_TABLE: tuple[tuple[ProactiveAction, ...], ...] = tuple(
    tuple(row)
    for row in (
        [ProactiveAction.NONE] * 5,
        [ProactiveAction.NONE] * 5,
        [ProactiveAction.NOTIFICATION] * 5,
        [
            ProactiveAction.NOTIFICATION,
            ProactiveAction.NOTIFICATION,
            ProactiveAction.SUGGESTION,
            ProactiveAction.SUGGESTION,
            ProactiveAction.SUGGESTION,
        ],
        [
            ProactiveAction.SUGGESTION,
            ProactiveAction.SUGGESTION,
            ProactiveAction.SUGGESTION,
            ProactiveAction.INTERVENTION,
            ProactiveAction.INTERVENTION,
        ],
    )
)


class RuleBasedPolicy:
    """Fixed (trust, complexity) -> action lookup."""

    name = "rule_based"

    def __init__(self, table: tuple[tuple[ProactiveAction, ...], ...] = DEFAULT_RULE_TABLE):
        if len(table) != 5 or any(len(row) != 5 for row in table):
            raise ValueError("rule table must be 5x5 (trust x complexity)")
        self.table = tuple(tuple(row) for row in table)

    def decide(self, state: DialogState) -> ProactiveAction:
        return self.table[state.trust_est - 1][state.complexity - 1]


def rule_based_policy(table=None) -> RuleBasedPolicy:
    return RuleBasedPolicy(table if table is not None else DEFAULT_RULE_TABLE)


def save_rule_table(policy: RuleBasedPolicy, path) -> None:
    data = [[a.label for a in row] for row in policy.table]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"rule_table": data}, fh, indent=2)
        fh.write("\n")


def load_rule_table(path) -> RuleBasedPolicy:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    table = tuple(
        tuple(ProactiveAction.from_label(a) for a in row)
        for row in data["rule_table"]
    )
    return RuleBasedPolicy(table)
