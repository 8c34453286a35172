"""Reinforcement-learned proactivity: MDP wiring, rewards, and DQN training.

The agent observes (step index, complexity, estimated trust, last step
score, last step duration) min-max scaled to [0, 1], picks one of the
four proactive acts, and is rewarded per exchange with the sum of three
terms: a trust table (+/-20), a success table relative to the step's
frozen mean/min statistics (0..15), and a duration bonus for beating the
step's mean duration (0 or 10). Training is a standard replay-buffer DQN
with a target network and linearly annealed epsilon-greedy exploration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import Game, ProactiveAction, apply_exchange, new_game_state
from .nn import Adam, Mlp, backward_and_step, load_checkpoint, save_checkpoint
from .policies import DialogState
from .trust import Estimator, KernelEstimator, make_exchange_record
from .users import (
    BehaviorConfig,
    PopulationConfig,
    TrustDynamicsConfig,
    behave,
    reported_trust,
    sample_user,
    update_latent_trust,
)

N_ACTIONS = 4
STATE_DIM = 5
DURATION_BIN_SECONDS = 5.0
N_DURATION_BINS = 60
REWARD_MIN, REWARD_MAX = -20.0, 45.0


# ---------------------------------------------------------------------------
# Reward tables

_TRUST_REWARD = {1: -20.0, 2: -10.0, 3: 0.0, 4: 10.0, 5: 20.0}


def reward_trust(trust_est: int) -> float:
    """Trust term: 20/10/0/-10/-20 for estimated trust 5..1."""
    try:
        return _TRUST_REWARD[trust_est]
    except KeyError:
        raise ValueError(f"trust estimate {trust_est} outside 1..5") from None


def reward_success(score: int, task_mean: float, task_min: float) -> float:
    """Success term relative to the step's statistics.

    The worst case earns nothing, beating the mean earns the most; the
    minimum check takes precedence when the mean degenerates onto it.
    """
    if score not in (0, 10, 20, 30, 40):
        raise ValueError(f"score {score} invalid")
    if score == task_min:
        return 0.0
    if score > task_mean:
        return 15.0
    if score == task_mean:
        return 10.0
    return 5.0


def reward_duration(duration_s: float, task_mean_duration: float) -> float:
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    return 10.0 if duration_s <= task_mean_duration else 0.0


def total_reward(trust_est: int, score: int, duration_s: float,
                 stats: "StepStats") -> float:
    return (
        reward_trust(trust_est)
        + reward_success(score, stats.mean_score, stats.min_score)
        + reward_duration(duration_s, stats.mean_duration)
    )


# ---------------------------------------------------------------------------
# Per-step environment statistics (frozen after warmup)

@dataclass(frozen=True)
class StepStats:
    mean_score: float
    min_score: float
    mean_duration: float


@dataclass(frozen=True)
class TaskStats:
    steps: tuple[StepStats, ...]

    def for_step(self, index: int) -> StepStats:
        return self.steps[index - 1]


def task_stats_warmup(
    game: Game,
    n_games: int,
    seed: int,
    population: PopulationConfig = PopulationConfig(),
    behavior: BehaviorConfig = BehaviorConfig(),
    trust_dynamics: TrustDynamicsConfig = TrustDynamicsConfig(),
) -> TaskStats:
    """Estimate per-step mean score/duration under uniform-random actions.

    The per-step minimum comes from the scoring tables themselves (the
    lowest score any option can yield), not from the sample.
    """
    if n_games < 100:
        raise ValueError("warmup needs at least 100 games")
    score_sums = np.zeros(len(game.steps))
    dur_sums = np.zeros(len(game.steps))
    for g in range(n_games):
        rng = np.random.default_rng(np.random.SeedSequence([seed, g]))
        user = sample_user(int(rng.integers(2**31)), population, behavior)
        state = new_game_state()
        while not state.terminal:
            step = game.step(state.current_step)
            action = ProactiveAction(int(rng.integers(N_ACTIONS)))
            sample = behave(user, state, step, action, rng, behavior)
            state, outcome = apply_exchange(
                game, state, action, sample.user_action, sample.duration_s,
                asked_help=sample.asked_help,
            )
            user = update_latent_trust(user, action, step, outcome, trust_dynamics)
            score_sums[step.index - 1] += outcome.score
            dur_sums[step.index - 1] += outcome.duration_s
    stats = []
    for step in game.steps:
        table_min = min(min(scores) for scores in step.score_table.values())
        stats.append(
            StepStats(
                mean_score=float(score_sums[step.index - 1] / n_games),
                min_score=float(table_min),
                mean_duration=float(dur_sums[step.index - 1] / n_games),
            )
        )
    return TaskStats(steps=tuple(stats))


def save_task_stats(stats: TaskStats, path) -> None:
    data = [
        {"mean_score": s.mean_score, "min_score": s.min_score,
         "mean_duration": s.mean_duration}
        for s in stats.steps
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"version": 1, "steps": data}, fh, indent=2)
        fh.write("\n")


def load_task_stats(path) -> TaskStats:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return TaskStats(
        steps=tuple(
            StepStats(s["mean_score"], s["min_score"], s["mean_duration"])
            for s in data["steps"]
        )
    )


# ---------------------------------------------------------------------------
# State encoding

def duration_bin(duration_s: float) -> int:
    """Discrete duration view: 5-second bins clipped to 1..60."""
    return int(min(max(math.ceil(duration_s / DURATION_BIN_SECONDS), 1), N_DURATION_BINS))


def encode_state(state: DialogState) -> np.ndarray:
    """Min-max scaled state vector; every component lies in [0, 1]."""
    return np.array(
        [
            (state.step_index - 1) / 11.0,
            (state.complexity - 1) / 4.0,
            (state.trust_est - 1) / 4.0,
            state.last_success / 40.0,
            (duration_bin(state.last_duration_s) - 1) / (N_DURATION_BINS - 1),
        ]
    )


def decode_state(vec: np.ndarray) -> DialogState:
    """Inverse of :func:`encode_state` up to duration binning."""
    b = round(float(vec[4]) * (N_DURATION_BINS - 1)) + 1
    return DialogState(
        step_index=round(float(vec[0]) * 11.0) + 1,
        complexity=round(float(vec[1]) * 4.0) + 1,
        trust_est=round(float(vec[2]) * 4.0) + 1,
        last_success=round(float(vec[3]) * 40.0 / 10.0) * 10,
        last_duration_s=(b - 0.5) * DURATION_BIN_SECONDS,
    )


# ---------------------------------------------------------------------------
# Replay buffer

class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int = 50_000, state_dim: int = STATE_DIM):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.float32)
        self.terminals = np.zeros(capacity, dtype=np.float32)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state, terminal: bool) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = float(terminal)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self._size < batch_size:
            raise ValueError("buffer smaller than batch size")
        idx = rng.integers(self._size, size=batch_size)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminals[idx],
        )


# ---------------------------------------------------------------------------
# Training configuration

@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    lr: float = 5e-5
    batch_size: int = 64
    total_steps: int = 300_000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.15      # anneal over this fraction of total steps
    target_sync_interval: int = 1_000
    use_target_network: bool = True
    buffer_capacity: int = 50_000
    warmup_transitions: int = 1_000
    hidden_sizes: tuple[int, ...] = (256, 256)
    optimistic_init: float = 0.0   # added to the output biases at init
    loss_kind: str = "mse"
    dtype: str = "float32"

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not (0 < self.eps_end <= self.eps_start <= 1):
            raise ValueError("epsilon schedule must stay within (0, 1]")
        if self.batch_size <= 0 or self.total_steps <= 0:
            raise ValueError("batch_size and total_steps must be positive")
        if self.warmup_transitions < self.batch_size:
            raise ValueError("warmup must cover at least one batch")


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear anneal from eps_start to eps_end, then flat."""
    anneal = cfg.eps_fraction * cfg.total_steps
    if step >= anneal:
        return cfg.eps_end
    frac = step / anneal
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


# ---------------------------------------------------------------------------
# Simulated dialog environment (one episode at a time)

class DialogEnv:
    """12-exchange episodes against a fresh simulated user per reset.

    ``reset(user_seed)`` derives all of the episode's randomness from
    (base_seed, user_seed), so evaluation can replay the same user set
    against different policies with matched noise streams.
    """

    def __init__(
        self,
        game: Game,
        stats: TaskStats,
        estimator: Optional[Estimator] = None,
        population: PopulationConfig = PopulationConfig(),
        behavior: BehaviorConfig = BehaviorConfig(),
        trust_dynamics: TrustDynamicsConfig = TrustDynamicsConfig(),
        base_seed: int = 0,
    ):
        self.game = game
        self.stats = stats
        self.estimator = estimator if estimator is not None else KernelEstimator()
        self.population = population
        self.behavior = behavior
        self.trust_dynamics = trust_dynamics
        self.base_seed = base_seed
        self._state = None
        self._dialog = None
        self._user = None
        self._rng = None

    def reset(self, user_seed: int) -> DialogState:
        self._rng = np.random.default_rng(
            np.random.SeedSequence([self.base_seed, int(user_seed)])
        )
        self._user = sample_user(int(user_seed), self.population, self.behavior)
        self._state = new_game_state()
        self._dialog = DialogState.initial(self.game.step(1).complexity)
        return self._dialog

    @property
    def terminal(self) -> bool:
        return self._state is None or self._state.terminal

    @property
    def user(self):
        return self._user

    def step(self, action: ProactiveAction):
        """Apply one proactive act; returns (next_state, reward, terminal, info)."""
        if self.terminal:
            raise ValueError("episode finished; call reset")
        step = self.game.step(self._state.current_step)
        sample = behave(self._user, self._state, step, action, self._rng, self.behavior)
        self._state, outcome = apply_exchange(
            self.game, self._state, action, sample.user_action, sample.duration_s,
            asked_help=sample.asked_help,
        )
        self._user = update_latent_trust(
            self._user, action, step, outcome, self.trust_dynamics
        )
        reported = reported_trust(self._user)
        record = make_exchange_record(self._user.profile, step, outcome)
        est = self.estimator.estimate(record, reported, self._rng)
        reward = total_reward(est, outcome.score, outcome.duration_s,
                              self.stats.for_step(step.index))
        terminal = self._state.terminal
        next_index = step.index if terminal else step.index + 1
        self._dialog = DialogState(
            step_index=next_index,
            complexity=self.game.step(next_index).complexity if not terminal
            else step.complexity,
            trust_est=est,
            last_success=outcome.score,
            last_duration_s=outcome.duration_s,
        )
        info = {
            "outcome": outcome,
            "reported_trust": reported,
            "trust_est": est,
            "perceived_difficulty": sample.perceived_difficulty,
            "record": record,
        }
        return self._dialog, reward, terminal, info


# ---------------------------------------------------------------------------
# Greedy policy over a trained network

class DqnPolicy:
    name = "rl"

    def __init__(self, net: Mlp):
        self.net = net

    def decide(self, state: DialogState) -> ProactiveAction:
        q = self.net.forward(encode_state(state).astype(self.net.dtype))
        return ProactiveAction(int(np.argmax(q)))

    def save(self, path) -> None:
        save_checkpoint(path, self.net, meta={"policy": "dqn", "state_dim": STATE_DIM})

    @staticmethod
    def load(path) -> "DqnPolicy":
        net, _, _ = load_checkpoint(path)
        return DqnPolicy(net)


# ---------------------------------------------------------------------------
# Training loop

@dataclass
class EpisodeLog:
    episode: int
    env_steps: int
    episode_return: float
    mean_loss: float
    epsilon: float
    action_counts: tuple[int, int, int, int]


@dataclass
class TrainResult:
    policy: DqnPolicy
    episodes: list[EpisodeLog] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        lines = ["episode\tenv_steps\treturn\tmean_loss\tepsilon\tn_none\tn_notification\tn_suggestion\tn_intervention"]
        for e in self.episodes:
            counts = "\t".join(str(c) for c in e.action_counts)
            lines.append(
                f"{e.episode}\t{e.env_steps}\t{e.episode_return:.4f}\t"
                f"{e.mean_loss:.6f}\t{e.epsilon:.4f}\t{counts}"
            )
        return lines

    def save_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.log_lines()) + "\n")


def train(
    env,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
    user_seed_base: int = 1_000_000,
) -> TrainResult:
    """Replay-buffer DQN against ``env``; returns the greedy policy + log.

    ``env`` needs reset(user_seed) -> DialogState and
    step(action) -> (state, reward, terminal, info). Actions are uniform
    random until the buffer holds ``warmup_transitions``.
    """
    config.validate()
    dtype = np.dtype(config.dtype)
    seq = np.random.SeedSequence(seed)
    init_seed, act_stream, sample_stream = seq.spawn(3)
    act_rng = np.random.default_rng(act_stream)
    sample_rng = np.random.default_rng(sample_stream)

    net = Mlp([STATE_DIM, *config.hidden_sizes, N_ACTIONS],
              seed=int(init_seed.generate_state(1)[0]), dtype=dtype)
    if config.optimistic_init:
        net.biases[-1] += dtype.type(config.optimistic_init)
    target = net.copy() if config.use_target_network else net
    opt = Adam(net, lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity)

    result = TrainResult(policy=DqnPolicy(net))
    episode = 0
    ep_return = 0.0
    ep_losses: list[float] = []
    ep_actions = [0, 0, 0, 0]
    state_vec = encode_state(env.reset(user_seed_base)).astype(np.float32)

    for step_i in range(config.total_steps):
        eps = epsilon_at(step_i, config)
        if len(buffer) < config.warmup_transitions or act_rng.random() < eps:
            action_idx = int(act_rng.integers(N_ACTIONS))
        else:
            q = net.forward(state_vec.astype(dtype))
            action_idx = int(np.argmax(q))

        next_state, reward, terminal, _ = env.step(ProactiveAction(action_idx))
        next_vec = encode_state(next_state).astype(np.float32)
        buffer.push(state_vec, action_idx, reward, next_vec, terminal)
        ep_return += reward
        ep_actions[action_idx] += 1

        if len(buffer) >= config.warmup_transitions:
            states, actions, rewards, next_states, terminals = buffer.sample(
                config.batch_size, sample_rng
            )
            q_next = target.forward(next_states.astype(dtype)).max(axis=1)
            td_target = rewards + config.gamma * (1.0 - terminals) * q_next
            targets = np.zeros((config.batch_size, N_ACTIONS), dtype=dtype)
            mask = np.zeros((config.batch_size, N_ACTIONS), dtype=dtype)
            rows = np.arange(config.batch_size)
            targets[rows, actions] = td_target
            mask[rows, actions] = 1.0
            try:
                loss = backward_and_step(net, opt, states.astype(dtype), targets,
                                         mask, config.loss_kind)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"diverged at step {step_i} (episode {episode}): {exc}"
                ) from exc
            ep_losses.append(loss)

        if config.use_target_network and (step_i + 1) % config.target_sync_interval == 0:
            target.load_from(net)

        if terminal:
            result.episodes.append(
                EpisodeLog(
                    episode=episode,
                    env_steps=step_i + 1,
                    episode_return=ep_return,
                    mean_loss=float(np.mean(ep_losses)) if ep_losses else 0.0,
                    epsilon=eps,
                    action_counts=tuple(ep_actions),
                )
            )
            episode += 1
            ep_return = 0.0
            ep_losses = []
            ep_actions = [0, 0, 0, 0]
            if step_i + 1 < config.total_steps:
                state_vec = encode_state(env.reset(user_seed_base + episode)).astype(np.float32)
        else:
            state_vec = next_vec

    if not net.all_finite():
        raise FloatingPointError("non-finite parameters after training")
    return result
