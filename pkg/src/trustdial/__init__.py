"""Trust-aware proactive dialog assistance: simulation, learning, evaluation."""

from .game import (
    Game,
    GameState,
    ProactiveAction,
    StepOutcome,
    TaskStep,
    UserAction,
    apply_exchange,
    best_option,
    build_game,
    load_game,
    save_game,
)
from .users import (
    BehaviorConfig,
    BehaviorSample,
    PopulationConfig,
    SimulatedUser,
    TraitSpec,
    TrustDynamicsConfig,
    UserProfile,
    behave,
    kl_behavior_distance,
    sample_user,
    update_latent_trust,
)
from .trust import (
    ExchangeRecord,
    KernelEstimator,
    LinearTrustModel,
    classifier_metrics,
    default_kernel,
    identity_kernel,
    make_ordinal_kernel,
)
from .policies import DialogState, RuleBasedPolicy, StaticPolicy, rule_based_policy, static_policy
from .nn import Adam, Mlp, backward_and_step, load_checkpoint, save_checkpoint
from .dqn import (
    DialogEnv,
    DqnPolicy,
    ReplayBuffer,
    TaskStats,
    TrainConfig,
    task_stats_warmup,
    total_reward,
    train,
)
from .evaluation import (
    EvalReport,
    UserSetManifest,
    baseline_policies,
    export_report,
    make_user_manifest,
    run_eval,
    welch_t_test,
)

__version__ = "0.1.0"
