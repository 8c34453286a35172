"""Turn-based 12-step decision game played between a user and an assistant.

The game is a fixed sequence of business-planning steps. Each step offers
3 to 5 options; the value of an option may depend on choices made at
earlier steps (a forward DAG of dependencies). Scores per step are one of
{0, 10, 20, 30, 40}; for every realized dependency combination exactly one
option scores the maximum (40) and at least one scores 0.

Step structure (names, option counts, dependencies) is fixed; the scoring
tables are generated from a seed, so one seed pins one exact game.
GameState is a value: transitions return new states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

SCORE_VALUES = (0, 10, 20, 30, 40)
MAX_STEP_SCORE = 40
N_STEPS = 12


class GameError(Exception):
    """Base class for game rule violations."""


class MissingDependencyError(GameError):
    """A step was scored before all of its dependency steps were selected."""


class InvalidActionError(GameError):
    """User action is not valid for the current step / agent action."""


class TerminalStateError(GameError):
    """An exchange was applied to a finished game."""


class ProactiveAction(IntEnum):
    """Assistant dialog acts, totally ordered by intrusiveness."""

    NONE = 0
    NOTIFICATION = 1
    SUGGESTION = 2
    INTERVENTION = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ProactiveAction":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown proactive action {label!r}") from None


class UserActionKind(Enum):
    SELECT_OPTION = "select_option"
    ASK_HELP = "ask_help"
    REQUEST_SUGGESTION = "request_suggestion"
    ACCEPT_SUGGESTION = "accept_suggestion"
    REJECT_THEN_SELECT = "reject_then_select"
    CONTINUE = "continue"


@dataclass(frozen=True)
class UserAction:
    kind: UserActionKind
    option: Optional[int] = None

    def __post_init__(self):
        needs_option = self.kind in (
            UserActionKind.SELECT_OPTION,
            UserActionKind.REJECT_THEN_SELECT,
        )
        if needs_option and self.option is None:
            raise InvalidActionError(f"{self.kind.value} requires an option")
        if not needs_option and self.option is not None:
            raise InvalidActionError(f"{self.kind.value} takes no option")

    @staticmethod
    def select(option: int) -> "UserAction":
        return UserAction(UserActionKind.SELECT_OPTION, option)

    @staticmethod
    def accept() -> "UserAction":
        return UserAction(UserActionKind.ACCEPT_SUGGESTION)

    @staticmethod
    def reject_then_select(option: int) -> "UserAction":
        return UserAction(UserActionKind.REJECT_THEN_SELECT, option)

    @staticmethod
    def proceed() -> "UserAction":
        return UserAction(UserActionKind.CONTINUE)


@dataclass(frozen=True)
class TaskStep:
    """One step of the game, with its seeded scoring table.

    ``score_table`` maps a tuple of option indices chosen at the dependency
    steps (in ``dependencies`` order; the empty tuple if there are none) to
    the per-option scores for this step.
    """

    index: int
    name: str
    options: tuple[str, ...]
    complexity: int
    dependencies: tuple[int, ...]
    score_table: dict[tuple[int, ...], tuple[int, ...]]

    @property
    def n_options(self) -> int:
        return len(self.options)

    def combo_for(self, selections: dict[int, int]) -> tuple[int, ...]:
        """Realized dependency combination given prior selections."""
        try:
            return tuple(selections[d] for d in self.dependencies)
        except KeyError as exc:
            raise MissingDependencyError(
                f"step {self.index} needs a selection at step {exc.args[0]}"
            ) from None

    def scores_for(self, selections: dict[int, int]) -> tuple[int, ...]:
        return self.score_table[self.combo_for(selections)]


@dataclass(frozen=True)
class StepOutcome:
    step_index: int
    chosen_option: int
    score: int
    duration_s: float
    agent_action: ProactiveAction
    user_requested_suggestion: bool = False
    user_asked_help: bool = False


@dataclass(frozen=True)
class GameState:
    """Progress through one game. ``current_step`` is 13 once finished."""

    current_step: int = 1
    selections: dict[int, int] = field(default_factory=dict)
    cumulative_score: int = 0
    step_durations: dict[int, float] = field(default_factory=dict)
    step_scores: dict[int, int] = field(default_factory=dict)
    exchange_log: tuple[StepOutcome, ...] = ()

    @property
    def terminal(self) -> bool:
        return self.current_step > N_STEPS


def new_game_state() -> GameState:
    return GameState()


@dataclass(frozen=True)
class Game:
    seed: int
    steps: tuple[TaskStep, ...]

    def step(self, index: int) -> TaskStep:
        return self.steps[index - 1]


# Fixed layout: (name, option labels, dependency step indices).
# complexity = clamp(n_options - 2 + n_dependencies, 1, 5); the twelve
# steps below cover all five complexity levels.
_STEP_PLAN: tuple[tuple[str, tuple[str, ...], tuple[int, ...]], ...] = (
    ("Company Name", ("Veltara", "Nordwind", "Kitefall"), ()),
    ("Location", ("Harbor district", "Tech park", "Old town", "Suburbs"), ()),
    ("Management", ("Ben", "Clara", "Viktor"), (1,)),
    ("Banking", ("Wallace Bank", "CityTrust", "Mercator", "KontoDirekt"), (2,)),
    ("Staffing", ("Graduates", "Veterans", "Contractors", "Mixed team", "Lean crew"), ()),
    ("Marketing", ("Social media", "Trade fairs", "Print ads"), (3, 5)),
    ("Production", ("In-house", "Outsourced", "Hybrid line", "On demand"), (2, 5)),
    ("Research", ("Hydrogen drive", "Autonomous systems", "Battery tech", "Green production"), (3, 4)),
    ("Partnerships", ("Supplier pact", "University lab", "Retail chain", "Export broker", "None yet"), (4,)),
    ("Expansion", ("New plant", "Second office", "Franchise", "Online only", "Hold steady"), (7, 9)),
    ("Pricing", ("Premium", "Mid market", "Discount"), (6, 7, 10)),
    ("Public Offering", ("Full IPO", "Private equity", "Employee shares", "Stay private"), (8, 10, 11)),
)


def _complexity(n_options: int, n_deps: int) -> int:
    return max(1, min(5, n_options - 2 + n_deps))


def _combos(option_counts: list[int]) -> list[tuple[int, ...]]:
    combos: list[tuple[int, ...]] = [()]
    for n in option_counts:
        combos = [c + (i,) for c in combos for i in range(n)]
    return combos


def build_game(seed: int) -> Game:
    """Generate the canonical 12-step game for ``seed``.

    The step layout is fixed; the seed drives only the scoring tables.
    Per dependency combination: one option gets 40 (the unique maximum),
    one gets 0, the rest draw from {10, 20, 30}.
    """
    rng = np.random.default_rng(seed)
    steps: list[TaskStep] = []
    for pos, (name, labels, deps) in enumerate(_STEP_PLAN, start=1):
        n_opt = len(labels)
        dep_counts = [len(_STEP_PLAN[d - 1][1]) for d in deps]
        table: dict[tuple[int, ...], tuple[int, ...]] = {}
        for combo in _combos(dep_counts):
            scores = [0] * n_opt
            best, worst = rng.choice(n_opt, size=2, replace=False)
            scores[best] = MAX_STEP_SCORE
            scores[worst] = 0
            for i in range(n_opt):
                if i != best and i != worst:
                    scores[i] = int(rng.choice((10, 20, 30)))
            table[combo] = tuple(scores)
        steps.append(
            TaskStep(
                index=pos,
                name=name,
                options=labels,
                complexity=_complexity(n_opt, len(deps)),
                dependencies=deps,
                score_table=table,
            )
        )
    return Game(seed=seed, steps=tuple(steps))


def best_option(state: GameState, step: TaskStep) -> int:
    """Unique argmax option for the realized dependency combination."""
    scores = step.scores_for(state.selections)
    return int(np.argmax(scores))


def score_for(step: TaskStep, selections: dict[int, int], option: int) -> int:
    scores = step.score_table[step.combo_for(selections)]
    return scores[option]


_RESOLVING = {
    UserActionKind.SELECT_OPTION,
    UserActionKind.ACCEPT_SUGGESTION,
    UserActionKind.REJECT_THEN_SELECT,
    UserActionKind.CONTINUE,
}


def apply_exchange(
    game: Game,
    state: GameState,
    agent_action: ProactiveAction,
    user_action: UserAction,
    duration_s: float,
    asked_help: bool = False,
) -> tuple[GameState, StepOutcome]:
    """Resolve one exchange and advance the game by one step.

    Resolution rules:
      * INTERVENTION picks the best option autonomously; the user action is
        an acknowledgement only.
      * NOTIFICATION / SUGGESTION present the best option; ACCEPT takes it,
        REJECT_THEN_SELECT or a plain SELECT takes the user's own pick.
      * NONE waits: the user selects directly, or has asked for a
        suggestion first (ACCEPT / REJECT_THEN_SELECT imply that sub-dialog).

    Sub-dialog turns (help, asking for the suggestion) do not consume a
    step; they are folded into ``duration_s`` and the outcome flags.
    """
    if state.terminal:
        raise TerminalStateError("game already finished")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if user_action.kind not in _RESOLVING:
        raise InvalidActionError(
            f"{user_action.kind.value} does not resolve an exchange"
        )

    step = game.step(state.current_step)
    requested = False

    if agent_action is ProactiveAction.INTERVENTION:
        chosen = best_option(state, step)
    elif agent_action in (ProactiveAction.NOTIFICATION, ProactiveAction.SUGGESTION):
        if user_action.kind is UserActionKind.ACCEPT_SUGGESTION:
            chosen = best_option(state, step)
        elif user_action.kind in (
            UserActionKind.REJECT_THEN_SELECT,
            UserActionKind.SELECT_OPTION,
        ):
            chosen = user_action.option
        else:
            raise InvalidActionError(
                f"cannot {user_action.kind.value} under {agent_action.label}"
            )
    else:  # NONE
        if user_action.kind is UserActionKind.SELECT_OPTION:
            chosen = user_action.option
        elif user_action.kind is UserActionKind.ACCEPT_SUGGESTION:
            chosen = best_option(state, step)
            requested = True
        elif user_action.kind is UserActionKind.REJECT_THEN_SELECT:
            chosen = user_action.option
            requested = True
        else:
            raise InvalidActionError("a silent agent needs an explicit selection")

    if not 0 <= chosen < step.n_options:
        raise InvalidActionError(
            f"option {chosen} out of range for step {step.index}"
        )

    score = score_for(step, state.selections, chosen)
    outcome = StepOutcome(
        step_index=step.index,
        chosen_option=chosen,
        score=score,
        duration_s=float(duration_s),
        agent_action=agent_action,
        user_requested_suggestion=requested,
        user_asked_help=asked_help,
    )
    next_state = replace(
        state,
        current_step=state.current_step + 1,
        selections={**state.selections, step.index: chosen},
        cumulative_score=state.cumulative_score + score,
        step_durations={**state.step_durations, step.index: float(duration_s)},
        step_scores={**state.step_scores, step.index: score},
        exchange_log=state.exchange_log + (outcome,),
    )
    return next_state, outcome


def replay_score(game: Game, selections: dict[int, int]) -> int:
    """Recompute the total score from a full selection sequence alone."""
    total = 0
    for step in game.steps:
        total += score_for(step, selections, selections[step.index])
    return total


def max_achievable_score(game: Game) -> int:
    """Total score of always picking the argmax (greedy equals optimal here:
    every combination's maximum is 40, so no trade-off across steps exists)."""
    return MAX_STEP_SCORE * N_STEPS


def help_text(game: Game, step: TaskStep) -> str:
    """Static informational text for a help request at ``step``."""
    if step.dependencies:
        dep_names = ", ".join(game.step(d).name for d in step.dependencies)
        dep_part = f"Your earlier choices at {dep_names} influence which option pays off."
    else:
        dep_part = "This step does not depend on earlier choices."
    return (
        f"Step {step.index} of {N_STEPS}: {step.name}. "
        f"Pick one of {step.n_options} options; scores range from 0 to 40. "
        + dep_part
    )


# ---------------------------------------------------------------------------
# Structured-text export / import (schema documented in docs/game_format.md)

GAME_SCHEMA_VERSION = 1


def game_to_dict(game: Game) -> dict:
    steps = []
    for step in game.steps:
        steps.append(
            {
                "index": step.index,
                "name": step.name,
                "options": list(step.options),
                "complexity": step.complexity,
                "dependencies": list(step.dependencies),
                "score_table": {
                    ",".join(map(str, combo)): list(scores)
                    for combo, scores in sorted(step.score_table.items())
                },
            }
        )
    return {"version": GAME_SCHEMA_VERSION, "seed": game.seed, "steps": steps}


def game_from_dict(data: dict) -> Game:
    if data.get("version") != GAME_SCHEMA_VERSION:
        raise ValueError(f"unsupported game schema version {data.get('version')!r}")
    steps = []
    for raw in data["steps"]:
        table = {}
        for key, scores in raw["score_table"].items():
            combo = tuple(int(x) for x in key.split(",")) if key else ()
            table[combo] = tuple(int(s) for s in scores)
        steps.append(
            TaskStep(
                index=int(raw["index"]),
                name=raw["name"],
                options=tuple(raw["options"]),
                complexity=int(raw["complexity"]),
                dependencies=tuple(int(d) for d in raw["dependencies"]),
                score_table=table,
            )
        )
    return Game(seed=int(data["seed"]), steps=tuple(steps))


def save_game(game: Game, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_game(path) -> Game:
    with open(path, encoding="utf-8") as fh:
        return game_from_dict(json.load(fh))
