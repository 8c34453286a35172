"""Simulated-user sampling, behavior, and trust dynamics."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustdial.game import (
    ProactiveAction,
    UserAction,
    UserActionKind,
    apply_exchange,
    build_game,
    new_game_state,
)
from trustdial.users import (
    BehaviorConfig,
    ConfigError,
    PopulationConfig,
    TraitSpec,
    TrustDynamicsConfig,
    behave,
    behavior_histograms,
    kl_behavior_distance,
    load_behavior_snapshot,
    reported_trust,
    sample_user,
    save_behavior_snapshot,
    update_latent_trust,
)

NEUTRAL = PopulationConfig(
    age=TraitSpec(45, 0, 18, 75),
    technical_affinity=TraitSpec(3, 0, 1, 5),
    propensity_to_trust=TraitSpec(3, 0, 1, 5),
    domain_expertise=TraitSpec(3, 0, 1, 5),
    openness=TraitSpec(3, 0, 1, 5),
    conscientiousness=TraitSpec(3, 0, 1, 5),
    extraversion=TraitSpec(3, 0, 1, 5),
    agreeableness=TraitSpec(3, 0, 1, 5),
    neuroticism=TraitSpec(3, 0, 1, 5),
)


@pytest.fixture(scope="module")
def game():
    return build_game(0)


def test_zero_std_gives_config_means():
    user = sample_user(0, NEUTRAL)
    p = user.profile
    assert p.age == 45
    assert p.technical_affinity == 3 == p.propensity_to_trust == p.domain_expertise
    assert p.openness == p.conscientiousness == p.extraversion == 3
    assert user.latent_trust == p.propensity_to_trust


def test_traits_respect_bounds():
    cfg = PopulationConfig()
    for seed in range(3_000):
        rng_vals = sample_user(seed, cfg).profile
        assert 18 <= rng_vals.age <= 75
        for trait in ("technical_affinity", "propensity_to_trust", "domain_expertise",
                      "openness", "conscientiousness", "extraversion",
                      "agreeableness", "neuroticism"):
            assert 1.0 <= getattr(rng_vals, trait) <= 5.0


def test_same_seed_same_user():
    assert sample_user(7) == sample_user(7)
    assert sample_user(7) != sample_user(8)


def test_invalid_population_configs():
    with pytest.raises(ConfigError):
        PopulationConfig(age=TraitSpec(45, -1, 18, 75)).validate()
    with pytest.raises(ConfigError):
        PopulationConfig(age=TraitSpec(45, 5, 80, 75)).validate()
    with pytest.raises(ConfigError):
        PopulationConfig(gender_probs=(0.5, 0.5, 0.5)).validate()


def test_behavior_params_are_pure_function_of_profile():
    a, b = sample_user(3), sample_user(3)
    assert a.behavior == b.behavior
    assert all(0.0 <= p <= 1.0 for p in (
        a.behavior.selection_skill, a.behavior.p_request_suggestion,
        a.behavior.p_ask_help, a.behavior.p_accept_suggestion,
    ))
    assert a.behavior.duration_base_s > 0


def test_intervention_user_action_is_acknowledgement(game):
    user = sample_user(1, NEUTRAL)
    rng = np.random.default_rng(0)
    state = new_game_state()
    for _ in range(50):
        sample = behave(user, state, game.step(1), ProactiveAction.INTERVENTION, rng)
        assert sample.user_action.kind is UserActionKind.CONTINUE
        assert sample.duration_s > 0
        assert 1 <= sample.perceived_difficulty <= 5


@pytest.mark.parametrize("step_index", [1, 6, 10])
def test_intervention_fastest_in_expectation(game, step_index):
    """Monte-Carlo over 10,000 draws per action at a neutral user/state."""
    step = game.step(step_index)
    state = new_game_state()
    state = replace(state, current_step=step_index,
                    selections={i: 0 for i in range(1, step_index)})
    means = {}
    for action in ProactiveAction:
        rng = np.random.default_rng(42)
        user = sample_user(1, NEUTRAL)
        durations = [
            behave(user, state, step, action, rng).duration_s for _ in range(10_000)
        ]
        means[action] = float(np.mean(durations))
    others = [means[a] for a in ProactiveAction if a is not ProactiveAction.INTERVENTION]
    assert means[ProactiveAction.INTERVENTION] < min(others)


def test_high_trust_acceptance_hits_ceiling(game):
    user = replace(sample_user(1, NEUTRAL), latent_trust=5.0)
    rng = np.random.default_rng(1)
    state = new_game_state()
    accepted = sum(
        behave(user, state, game.step(1), ProactiveAction.SUGGESTION, rng)
        .user_action.kind is UserActionKind.ACCEPT_SUGGESTION
        for _ in range(10_000)
    )
    assert accepted / 10_000 >= 0.90


def test_acceptance_monotone_in_trust(game):
    rng_seed = 3
    rates = []
    state = new_game_state()
    for trust in (1.0, 2.0, 3.0, 4.0, 5.0):
        user = replace(sample_user(1, NEUTRAL), latent_trust=trust)
        rng = np.random.default_rng(rng_seed)
        n_acc = sum(
            behave(user, state, build_game(0).step(1), ProactiveAction.SUGGESTION, rng)
            .user_action.kind is UserActionKind.ACCEPT_SUGGESTION
            for _ in range(4_000)
        )
        rates.append(n_acc / 4_000)
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_expertise_raises_unaided_score(game):
    """Mean unaided score strictly higher for domain expertise 5 vs 1."""
    def mean_score(expertise):
        cfg = PopulationConfig(
            **{**NEUTRAL.__dict__, "domain_expertise": TraitSpec(expertise, 0, 1, 5)}
        )
        user = sample_user(1, cfg)
        rng = np.random.default_rng(9)
        total = 0
        for _ in range(4_000)            :
            state = new_game_state()
            sample = behave(user, state, game.step(1), ProactiveAction.NONE, rng)
            if sample.user_action.kind is UserActionKind.SELECT_OPTION:
                _, outcome = apply_exchange(
                    game, state, ProactiveAction.NONE, sample.user_action,
                    sample.duration_s,
                )
                total += outcome.score
        return total

    assert mean_score(5.0) > mean_score(1.0)


def test_behave_rejects_terminal_state(game):
    user = sample_user(1, NEUTRAL)
    state = new_game_state()
    state = replace(state, current_step=13)
    with pytest.raises(ValueError):
        behave(user, state, game.step(12), ProactiveAction.NONE, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Latent trust dynamics

def _outcome_for(game, action, rank="mid"):
    """First-step outcome whose score is the worst/middle/best of the table."""
    step = game.step(1)
    ordering = sorted(range(step.n_options), key=lambda o: step.score_table[()][o])
    option = {"worst": ordering[0], "mid": ordering[1], "best": ordering[-1]}[rank]
    state = new_game_state()
    if action is ProactiveAction.INTERVENTION:
        _, outcome = apply_exchange(game, state, action, UserAction.proceed(), 5.0)
    else:
        _, outcome = apply_exchange(game, state, action, UserAction.select(option), 5.0)
    return step, outcome


def test_trust_delta_bounded_and_clamped(game):
    cfg = TrustDynamicsConfig()
    step, outcome = _outcome_for(game, ProactiveAction.NONE)
    for trust in np.linspace(1, 5, 21):
        user = replace(sample_user(1), latent_trust=float(trust))
        for action in ProactiveAction:
            updated = update_latent_trust(user, action, step, outcome, cfg)
            assert 1.0 <= updated.latent_trust <= 5.0
            assert abs(updated.latent_trust - user.latent_trust) <= cfg.max_step + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    trust=st.floats(1.0, 5.0),
    propensity=st.floats(1.0, 5.0),
    action=st.sampled_from(list(ProactiveAction)),
    score_index=st.integers(0, 2),
)
def test_trust_stays_in_range_under_extreme_dynamics(trust, propensity, action, score_index):
    game = build_game(0)
    cfg = TrustDynamicsConfig(max_step=0.5, none_base=0.4, intervention_base=-0.45)
    user = sample_user(1, NEUTRAL)
    user = replace(
        user,
        latent_trust=trust,
        profile=replace(user.profile, propensity_to_trust=propensity),
    )
    step = game.step(1)
    scores = sorted(set(step.score_table[()]))
    option = step.score_table[()].index(scores[min(score_index, len(scores) - 1)])
    _, outcome = apply_exchange(game, new_game_state(), action,
                                UserAction.proceed() if action is ProactiveAction.INTERVENTION
                                else UserAction.select(option), 5.0)
    updated = update_latent_trust(user, action, step, outcome, cfg)
    assert 1.0 <= updated.latent_trust <= 5.0
    assert abs(updated.latent_trust - trust) <= cfg.max_step + 1e-12


def test_zero_magnitude_config_freezes_trust(game):
    cfg = TrustDynamicsConfig(max_step=0.0)
    user = sample_user(1)
    step, outcome = _outcome_for(game, ProactiveAction.INTERVENTION, rank="best")
    for _ in range(12):
        user = update_latent_trust(user, ProactiveAction.INTERVENTION, step, outcome, cfg)
    assert user.latent_trust == sample_user(1).latent_trust


def test_intervention_erodes_and_good_scores_help(game):
    user = replace(sample_user(1, NEUTRAL), latent_trust=3.0)
    step, low = _outcome_for(game, ProactiveAction.INTERVENTION, rank="best")
    eroded = update_latent_trust(user, ProactiveAction.INTERVENTION, step, low)
    assert eroded.latent_trust < user.latent_trust

    step1 = game.step(1)
    zero_opt = step1.score_table[()].index(0)
    best_opt = step1.score_table[()].index(40)
    _, bad = apply_exchange(game, new_game_state(), ProactiveAction.NONE,
                            UserAction.select(zero_opt), 5.0)
    _, good = apply_exchange(game, new_game_state(), ProactiveAction.NONE,
                             UserAction.select(best_opt), 5.0)
    worse = update_latent_trust(user, ProactiveAction.NONE, step1, bad)
    better = update_latent_trust(user, ProactiveAction.NONE, step1, good)
    assert better.latent_trust > worse.latent_trust


def test_outcome_step_mismatch_rejected(game):
    user = sample_user(1)
    step, outcome = _outcome_for(game, ProactiveAction.NONE)
    with pytest.raises(ValueError):
        update_latent_trust(user, ProactiveAction.NONE, game.step(2), outcome)


def test_reported_trust_discretization():
    user = sample_user(1)
    for latent, expected in [(1.0, 1), (1.49, 1), (2.5, 2), (2.51, 3), (3.5, 4), (4.6, 5), (5.0, 5)]:
        assert reported_trust(replace(user, latent_trust=latent)) == expected


# ---------------------------------------------------------------------------
# KL behavior distance

def test_kl_identical_distributions_is_zero():
    d = {"a": np.array([0.25, 0.75]), "b": np.array([0.1, 0.2, 0.7])}
    assert kl_behavior_distance(d, d) == pytest.approx(0.0, abs=1e-6)


def test_kl_hand_computed_two_bin_case():
    """Independent arithmetic for P=[.5,.5] vs Q=[.9,.1]: symmetrized KL in
    nats, normalized by D/(1+D)."""
    kl_pq = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    kl_qp = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
    d_sym = 0.5 * (kl_pq + kl_qp)
    expected = d_sym / (1.0 + d_sym)
    got = kl_behavior_distance({"x": [0.5, 0.5]}, {"x": [0.9, 0.1]})
    assert got == pytest.approx(expected, abs=1e-9)


def test_kl_errors():
    with pytest.raises(ValueError):
        kl_behavior_distance({}, {})
    with pytest.raises(ValueError):
        kl_behavior_distance({"a": [0.5, 0.5]}, {"b": [0.5, 0.5]})
    with pytest.raises(ValueError):
        kl_behavior_distance({"a": [0.5, 0.5]}, {"a": [0.3, 0.3, 0.4]})
    with pytest.raises(ValueError):
        kl_behavior_distance({"a": [0.0, 0.0]}, {"a": [0.5, 0.5]})


def _collect_samples(game, seed, n_games=120):
    rows = []
    for g in range(n_games):
        rng = np.random.default_rng([seed, g])
        user = sample_user(int(rng.integers(2**31)))
        state = new_game_state()
        while not state.terminal:
            step = game.step(state.current_step)
            action = ProactiveAction(int(rng.integers(4)))
            sample = behave(user, state, step, action, rng)
            state, outcome = apply_exchange(
                game, state, action, sample.user_action, sample.duration_s,
                asked_help=sample.asked_help,
            )
            user = update_latent_trust(user, action, step, outcome)
            rows.append((outcome.score, outcome.duration_s, sample.perceived_difficulty,
                         outcome.user_requested_suggestion, outcome.user_asked_help))
    return rows


def test_snapshot_roundtrip_and_self_distance(game, tmp_path):
    """Fresh behavior vs an archived snapshot of the same generator stays
    within the realism band (<= 0.172)."""
    hists_a = behavior_histograms(_collect_samples(game, seed=500))
    path = tmp_path / "snapshot.tsv"
    save_behavior_snapshot(hists_a, path)
    loaded = load_behavior_snapshot(path)
    assert kl_behavior_distance(hists_a, loaded) == pytest.approx(0.0, abs=1e-6)

    hists_b = behavior_histograms(_collect_samples(game, seed=501))
    dist = kl_behavior_distance(hists_b, loaded)
    assert 0.0 < dist <= 0.172
