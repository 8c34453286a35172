"""Simulated users: trait sampling, per-exchange behavior, latent trust.

A simulated user is a bundle of static traits drawn from truncated
Gaussians plus a continuous latent trust state in [1, 5]. Behavior
(option quality, help/suggestion requests, acceptance, duration,
perceived difficulty) is sampled per exchange conditioned on the
assistant's proactive action, the step complexity, and current trust.

Latent trust evolves deterministically per exchange: gentle, well-timed
assistance builds it, autonomous intervention erodes it (less so for
already-trusting users), and good outcomes help. All constants live in
:class:`BehaviorConfig` / :class:`TrustDynamicsConfig`; the defaults are
the frozen calibration used by the shipped experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .game import (
    GameState,
    ProactiveAction,
    StepOutcome,
    TaskStep,
    UserAction,
)


class ConfigError(ValueError):
    """Invalid population or behavior configuration."""


@dataclass(frozen=True)
class TraitSpec:
    """Truncated Gaussian for one scalar trait."""

    mean: float
    std: float
    low: float
    high: float

    def validate(self, name: str) -> None:
        if self.std < 0:
            raise ConfigError(f"{name}: std must be >= 0, got {self.std}")
        if self.low >= self.high:
            raise ConfigError(f"{name}: bounds inverted ({self.low} >= {self.high})")
        if not self.low <= self.mean <= self.high:
            raise ConfigError(f"{name}: mean {self.mean} outside [{self.low}, {self.high}]")

    def sample(self, rng: np.random.Generator) -> float:
        if self.std == 0:
            return self.mean
        # rejection sampling; bounds are a few std wide so this terminates fast
        for _ in range(1000):
            x = rng.normal(self.mean, self.std)
            if self.low <= x <= self.high:
                return float(x)
        return float(min(max(self.mean, self.low), self.high))


GENDERS = ("female", "male", "nonbinary")


@dataclass(frozen=True)
class PopulationConfig:
    age: TraitSpec = TraitSpec(45.0, 14.0, 18.0, 75.0)
    technical_affinity: TraitSpec = TraitSpec(3.2, 0.9, 1.0, 5.0)
    propensity_to_trust: TraitSpec = TraitSpec(3.0, 0.55, 1.0, 5.0)
    domain_expertise: TraitSpec = TraitSpec(2.8, 0.9, 1.0, 5.0)
    openness: TraitSpec = TraitSpec(3.2, 0.8, 1.0, 5.0)
    conscientiousness: TraitSpec = TraitSpec(3.1, 0.8, 1.0, 5.0)
    extraversion: TraitSpec = TraitSpec(2.9, 0.8, 1.0, 5.0)
    agreeableness: TraitSpec = TraitSpec(3.1, 0.8, 1.0, 5.0)
    neuroticism: TraitSpec = TraitSpec(2.8, 0.8, 1.0, 5.0)
    gender_probs: tuple[float, ...] = (0.49, 0.48, 0.03)

    def validate(self) -> None:
        for name in (
            "age",
            "technical_affinity",
            "propensity_to_trust",
            "domain_expertise",
            "openness",
            "conscientiousness",
            "extraversion",
            "agreeableness",
            "neuroticism",
        ):
            getattr(self, name).validate(name)
        if abs(sum(self.gender_probs) - 1.0) > 1e-9 or len(self.gender_probs) != len(GENDERS):
            raise ConfigError("gender_probs must match GENDERS and sum to 1")


@dataclass(frozen=True)
class UserProfile:
    age: float
    gender: str
    technical_affinity: float
    propensity_to_trust: float
    domain_expertise: float
    openness: float
    conscientiousness: float
    extraversion: float
    agreeableness: float
    neuroticism: float


@dataclass(frozen=True)
class BehaviorParams:
    """User-level behavior anchors, a pure function of profile + config."""

    selection_skill: float
    p_request_suggestion: float
    p_ask_help: float
    p_accept_suggestion: float  # at neutral trust (3)
    duration_base_s: float
    duration_factor: float


@dataclass(frozen=True)
class SimulatedUser:
    profile: UserProfile
    latent_trust: float
    behavior: BehaviorParams


def _clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


@dataclass(frozen=True)
class BehaviorConfig:
    """Generative behavior model constants (the calibration surface).

    Duration tables are mean seconds per complexity level 1..5 for a
    trait-neutral user; individual draws are log-normal around them.
    """

    # unaided option quality
    skill_base: float = 0.60
    skill_expertise_gain: float = 0.10
    skill_tech_gain: float = 0.02
    skill_complexity_slope: float = 0.24  # added at cx=1, subtracted at cx=5

    # dialog moves
    help_base: float = 0.08
    request_base: float = 0.10
    request_trust_slope: float = 0.05
    request_complexity_slope: float = 0.075
    accept_base: float = 0.22
    accept_trust_slope: float = 0.185
    accept_agreeable_gain: float = 0.03
    accept_floor: float = 0.05
    accept_ceiling: float = 0.97
    engage_offset: float = 0.0   # notification opt-in vs plain acceptance
    engaged_accept_bonus: float = 0.40

    # durations (mean seconds by complexity 1..5)
    deliberate_mean_s: tuple[float, ...] = (38.0, 60.0, 88.0, 128.0, 174.0)
    review_mean_s: tuple[float, ...] = (40.0, 68.0, 94.0, 116.0, 130.0)
    intervention_mean_s: tuple[float, ...] = (36.0, 64.0, 90.0, 126.0, 144.0)
    notification_engaged_extra_s: float = 10.0
    intervention_distrust_slowdown: float = 0.10
    notification_unengaged_extra_s: float = 4.0
    request_extra_s: float = 12.0
    help_extra_s: float = 25.0
    reject_extra_frac: float = 0.55  # fraction of deliberate time after a reject
    duration_sigma: float = 0.32
    duration_tech_gain: float = 0.10
    duration_age_gain: float = 0.08

    def validate(self) -> None:
        for name in ("deliberate_mean_s", "review_mean_s", "intervention_mean_s"):
            table = getattr(self, name)
            if len(table) != 5 or any(t <= 0 for t in table):
                raise ConfigError(f"{name} must be 5 positive means")
        if self.duration_sigma < 0:
            raise ConfigError("duration_sigma must be >= 0")


@dataclass(frozen=True)
class TrustDynamicsConfig:
    """Deterministic latent-trust update constants.

    Per exchange: ``delta = base(action, complexity) + score_gain * (score - 20) / 40``,
    the intervention base scaled down for already-trusting users, the whole
    delta scaled by propensity to trust, then clamped to ``max_step``.
    """

    max_step: float = 0.5
    score_gain: float = 0.06
    none_base: float = -0.014
    none_complexity_slope: float = -0.060
    notification_base: float = 0.004
    notification_complexity_slope: float = 0.050
    suggestion_base: float = -0.013
    suggestion_complexity_slope: float = 0.050
    intervention_base: float = -0.091
    intervention_complexity_slope: float = 0.030
    intervention_trust_tolerance: float = 1.10
    none_recovery_gain: float = 0.05
    propensity_gain: float = 0.25


TRUST_MIN, TRUST_MAX = 1.0, 5.0


def sample_user(seed: int, config: PopulationConfig = PopulationConfig(),
                behavior_config: BehaviorConfig = BehaviorConfig()) -> SimulatedUser:
    """Draw one user. Same seed, same user; initial trust = propensity."""
    config.validate()
    behavior_config.validate()
    rng = np.random.default_rng(seed)
    profile = UserProfile(
        age=round(TraitSpec.sample(config.age, rng)),
        gender=GENDERS[rng.choice(len(GENDERS), p=config.gender_probs)],
        technical_affinity=config.technical_affinity.sample(rng),
        propensity_to_trust=config.propensity_to_trust.sample(rng),
        domain_expertise=config.domain_expertise.sample(rng),
        openness=config.openness.sample(rng),
        conscientiousness=config.conscientiousness.sample(rng),
        extraversion=config.extraversion.sample(rng),
        agreeableness=config.agreeableness.sample(rng),
        neuroticism=config.neuroticism.sample(rng),
    )
    return SimulatedUser(
        profile=profile,
        latent_trust=profile.propensity_to_trust,
        behavior=derive_behavior(profile, behavior_config),
    )


def derive_behavior(profile: UserProfile, cfg: BehaviorConfig) -> BehaviorParams:
    skill = _clip(
        cfg.skill_base
        + cfg.skill_expertise_gain * (profile.domain_expertise - 3.0)
        + cfg.skill_tech_gain * (profile.technical_affinity - 3.0),
        0.05,
        0.95,
    )
    p_req = _clip(cfg.request_base + 0.02 * (profile.openness - 3.0)
                  - 0.02 * (profile.domain_expertise - 3.0), 0.02, 0.85)
    p_help = _clip(cfg.help_base - 0.02 * (profile.domain_expertise - 3.0)
                   + 0.015 * (profile.neuroticism - 3.0), 0.0, 0.5)
    p_accept = _accept_probability(3.0, profile, cfg)
    factor = math.exp(
        cfg.duration_tech_gain * (3.0 - profile.technical_affinity) / 2.0
        + cfg.duration_age_gain * (profile.age - 45.0) / 30.0
    )
    return BehaviorParams(
        selection_skill=skill,
        p_request_suggestion=p_req,
        p_ask_help=p_help,
        p_accept_suggestion=p_accept,
        duration_base_s=cfg.deliberate_mean_s[2] * factor,
        duration_factor=factor,
    )


def _accept_probability(trust: float, profile: UserProfile, cfg: BehaviorConfig) -> float:
    return _clip(
        cfg.accept_base
        + cfg.accept_trust_slope * (trust - 1.0)
        + cfg.accept_agreeable_gain * (profile.agreeableness - 3.0),
        cfg.accept_floor,
        cfg.accept_ceiling,
    )


def _skill_at(user: SimulatedUser, complexity: int, cfg: BehaviorConfig) -> float:
    return _clip(
        user.behavior.selection_skill
        + cfg.skill_complexity_slope * (3.0 - complexity) / 2.0,
        0.05,
        0.95,
    )


@dataclass(frozen=True)
class BehaviorSample:
    user_action: UserAction
    duration_s: float
    perceived_difficulty: int
    asked_help: bool = False


def _lognormal(mean_s: float, sigma: float, rng: np.random.Generator) -> float:
    if sigma == 0:
        return max(mean_s, 1.0)
    draw = mean_s * math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma)
    return max(draw, 1.0)


def _unaided_pick(user: SimulatedUser, step: TaskStep, best: int,
                  cfg: BehaviorConfig, rng: np.random.Generator) -> int:
    if rng.random() < _skill_at(user, step.complexity, cfg):
        return best
    others = [i for i in range(step.n_options) if i != best]
    return int(others[rng.integers(len(others))])


def behave(
    user: SimulatedUser,
    state: GameState,
    step: TaskStep,
    agent_action: ProactiveAction,
    rng: np.random.Generator,
    cfg: BehaviorConfig = BehaviorConfig(),
) -> BehaviorSample:
    """Sample the user's resolving action and timing for one exchange."""
    if state.terminal:
        raise ValueError("cannot behave in a terminal state")

    from .game import best_option  # local to avoid import cycle at module load

    cx = step.complexity
    trust = user.latent_trust
    best = best_option(state, step)
    factor = user.behavior.duration_factor
    accept_p = _accept_probability(trust, user.profile, cfg)
    sigma = cfg.duration_sigma

    asked_help = False
    if agent_action is ProactiveAction.INTERVENTION:
        action = UserAction.proceed()
        mean = cfg.intervention_mean_s[cx - 1] * factor
        if trust < 3.0:  # distrusting users re-check what the agent did
            mean *= 1.0 + cfg.intervention_distrust_slowdown * (3.0 - trust) / 2.0
        duration = _lognormal(mean, sigma, rng)
    elif agent_action is ProactiveAction.SUGGESTION:
        if rng.random() < accept_p:
            action = UserAction.accept()
            mean = cfg.review_mean_s[cx - 1] * factor
        else:
            pick = _unaided_pick(user, step, best, cfg, rng)
            action = UserAction.reject_then_select(pick)
            mean = (cfg.review_mean_s[cx - 1]
                    + cfg.reject_extra_frac * cfg.deliberate_mean_s[cx - 1]) * factor
        duration = _lognormal(mean, sigma, rng)
    elif agent_action is ProactiveAction.NOTIFICATION:
        engaged = rng.random() < _clip(accept_p + cfg.engage_offset, 0.05, 0.95)
        if engaged:
            if rng.random() < _clip(accept_p + cfg.engaged_accept_bonus, 0.05, 0.98):
                action = UserAction.accept()
                mean = (cfg.review_mean_s[cx - 1] + cfg.notification_engaged_extra_s) * factor
            else:
                pick = _unaided_pick(user, step, best, cfg, rng)
                action = UserAction.reject_then_select(pick)
                mean = (cfg.review_mean_s[cx - 1] + cfg.notification_engaged_extra_s
                        + cfg.reject_extra_frac * cfg.deliberate_mean_s[cx - 1]) * factor
        else:
            pick = _unaided_pick(user, step, best, cfg, rng)
            action = UserAction.select(pick)
            mean = (cfg.deliberate_mean_s[cx - 1] + cfg.notification_unengaged_extra_s) * factor
        duration = _lognormal(mean, sigma, rng)
    else:  # NONE: the user acts on their own, possibly via a sub-dialog
        asked_help = rng.random() < user.behavior.p_ask_help
        p_req = _clip(
            user.behavior.p_request_suggestion
            + cfg.request_trust_slope * (trust - 3.0)
            + cfg.request_complexity_slope * (cx - 3.0),
            0.02,
            0.85,
        )
        if rng.random() < p_req:
            if rng.random() < accept_p:
                action = UserAction.accept()
                mean = (cfg.review_mean_s[cx - 1] + cfg.request_extra_s) * factor
            else:
                pick = _unaided_pick(user, step, best, cfg, rng)
                action = UserAction.reject_then_select(pick)
                mean = (cfg.review_mean_s[cx - 1] + cfg.request_extra_s
                        + cfg.reject_extra_frac * cfg.deliberate_mean_s[cx - 1]) * factor
        else:
            pick = _unaided_pick(user, step, best, cfg, rng)
            action = UserAction.select(pick)
            mean = cfg.deliberate_mean_s[cx - 1] * factor
        duration = _lognormal(mean, sigma, rng)
        if asked_help:
            duration += _lognormal(cfg.help_extra_s, sigma, rng)

    difficulty = int(_clip(
        round(cx + 0.8 * rng.standard_normal()
              - 0.3 * (user.profile.domain_expertise - 3.0)),
        1,
        5,
    ))
    return BehaviorSample(
        user_action=action,
        duration_s=duration,
        perceived_difficulty=difficulty,
        asked_help=asked_help,
    )


def update_latent_trust(
    user: SimulatedUser,
    agent_action: ProactiveAction,
    step: TaskStep,
    outcome: StepOutcome,
    cfg: TrustDynamicsConfig = TrustDynamicsConfig(),
) -> SimulatedUser:
    """Move latent trust by a bounded, deterministic delta for one exchange."""
    if outcome.step_index != step.index:
        raise ValueError("outcome does not belong to this step")
    cx = step.complexity
    if agent_action is ProactiveAction.NONE:
        base = cfg.none_base + cfg.none_complexity_slope * (cx - 3.0)
        if user.latent_trust < 3.0:
            base += cfg.none_recovery_gain * (3.0 - user.latent_trust)
    elif agent_action is ProactiveAction.NOTIFICATION:
        base = cfg.notification_base + cfg.notification_complexity_slope * (cx - 3.0)
    elif agent_action is ProactiveAction.SUGGESTION:
        base = cfg.suggestion_base + cfg.suggestion_complexity_slope * (cx - 3.0)
    else:
        tolerance = 1.0 - cfg.intervention_trust_tolerance * (user.latent_trust - 3.0) / 2.0
        base = (cfg.intervention_base * tolerance
                + cfg.intervention_complexity_slope * (cx - 3.0))

    delta = base + cfg.score_gain * (outcome.score - 20.0) / 40.0
    prop = user.profile.propensity_to_trust
    if delta >= 0:
        delta *= 1.0 + cfg.propensity_gain * (prop - 3.0) / 2.0
    else:
        delta *= 1.0 + cfg.propensity_gain * (3.0 - prop) / 2.0
    delta = _clip(delta, -cfg.max_step, cfg.max_step)
    new_trust = _clip(user.latent_trust + delta, TRUST_MIN, TRUST_MAX)
    return replace(user, latent_trust=new_trust)


def reported_trust(user: SimulatedUser) -> int:
    """Discretized (1..5) view of the latent trust state."""
    return int(_clip(round(user.latent_trust), 1, 5))


# ---------------------------------------------------------------------------
# Behavior distribution comparison (simulator validation)

_EPS = 1e-9


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def kl_behavior_distance(
    simulated: dict[str, np.ndarray] | dict[str, Iterable[float]],
    reference: dict[str, np.ndarray] | dict[str, Iterable[float]],
) -> float:
    """Mean normalized symmetric KL distance across matched variables.

    Per variable: both histograms are epsilon-smoothed and renormalized,
    D = 0.5 * (KL(P||Q) + KL(Q||P)) in nats, then mapped to [0, 1) via
    D / (1 + D). Returns the mean over variables; 0 iff all match exactly.
    """
    if not simulated or set(simulated) != set(reference):
        raise ValueError("distributions must be non-empty and share variable names")
    total = 0.0
    for name in sorted(simulated):
        p = np.asarray(simulated[name], dtype=float)
        q = np.asarray(reference[name], dtype=float)
        if p.size == 0 or q.size == 0 or p.size != q.size:
            raise ValueError(f"variable {name}: empty or mismatched supports")
        if p.sum() <= 0 or q.sum() <= 0:
            raise ValueError(f"variable {name}: empty distribution")
        if np.any(p == 0) or np.any(q == 0):  # smooth only when support differs
            p = p + _EPS
            q = q + _EPS
        p = p / p.sum()
        q = q / q.sum()
        d = 0.5 * (_kl(p, q) + _kl(q, p))
        total += d / (1.0 + d)
    return total / len(simulated)


DURATION_BIN_EDGES_S = tuple(float(x) for x in range(0, 331, 30))  # 11 bins + overflow


def behavior_histograms(samples: Iterable[tuple[int, float, int, bool, bool]]) -> dict[str, np.ndarray]:
    """Histograms of (score, duration_s, difficulty, requested, helped) tuples.

    Returns probability vectors keyed by variable name, the format consumed
    by :func:`kl_behavior_distance` and the snapshot files.
    """
    rows = list(samples)
    if not rows:
        raise ValueError("no behavior samples")
    scores = np.array([r[0] for r in rows])
    durations = np.array([r[1] for r in rows])
    difficulty = np.array([r[2] for r in rows])
    requested = np.array([r[3] for r in rows], dtype=int)
    helped = np.array([r[4] for r in rows], dtype=int)

    score_hist = np.array([(scores == v).sum() for v in (0, 10, 20, 30, 40)], dtype=float)
    dur_hist = np.histogram(np.clip(durations, 0, 330.0 - 1e-9), bins=DURATION_BIN_EDGES_S)[0].astype(float)
    diff_hist = np.array([(difficulty == v).sum() for v in (1, 2, 3, 4, 5)], dtype=float)
    req_hist = np.array([(requested == 0).sum(), (requested == 1).sum()], dtype=float)
    help_hist = np.array([(helped == 0).sum(), (helped == 1).sum()], dtype=float)

    out = {
        "score": score_hist,
        "duration": dur_hist,
        "difficulty": diff_hist,
        "requested_suggestion": req_hist,
        "asked_help": help_hist,
    }
    return {k: v / v.sum() for k, v in out.items()}


def save_behavior_snapshot(hists: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variable\tbin\tprobability\n")
        for name in sorted(hists):
            for i, p in enumerate(hists[name]):
                fh.write(f"{name}\t{i}\t{p:.10f}\n")


def load_behavior_snapshot(path) -> dict[str, np.ndarray]:
    rows: dict[str, list[tuple[int, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("variable"):
            raise ValueError("not a behavior snapshot file")
        for line in fh:
            name, idx, p = line.rstrip("\n").split("\t")
            rows.setdefault(name, []).append((int(idx), float(p)))
    return {
        name: np.array([p for _, p in sorted(pairs)])
        for name, pairs in rows.items()
    }
