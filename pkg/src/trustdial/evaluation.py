"""Strategy evaluation: matched-user rollouts, aggregates, significance tests.

Each strategy plays one full game against every user in a fixed manifest,
with per-game randomness derived from (eval seed, user seed) so the user
population and noise streams are identical across strategies. Aggregates
follow the experiment's conventions: a game's trust is the mean of its 12
discretized per-exchange trust states, efficiency is total success over
total duration, and cooperation is efficiency times trust. All strategy
pairs are compared per metric with Welch t-tests under Bonferroni
correction.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats as sstats

from .dqn import DialogEnv, N_ACTIONS
from .game import ProactiveAction
from .policies import Policy, rule_based_policy, static_policy

EVAL_METRICS = ("trust", "success", "duration", "efficiency", "cooperation")


# ---------------------------------------------------------------------------
# Fixed user set

@dataclass(frozen=True)
class UserSetManifest:
    seeds: tuple[int, ...]
    digests: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.seeds)


def profile_digest(profile) -> str:
    payload = json.dumps(
        {
            "age": round(profile.age, 6),
            "gender": profile.gender,
            "tech": round(profile.technical_affinity, 6),
            "prop": round(profile.propensity_to_trust, 6),
            "dom": round(profile.domain_expertise, 6),
            "big5": [
                round(profile.openness, 6),
                round(profile.conscientiousness, 6),
                round(profile.extraversion, 6),
                round(profile.agreeableness, 6),
                round(profile.neuroticism, 6),
            ],
        },
        sort_keys=True,
    )
    return hashlib.md5(payload.encode()).hexdigest()[:12]


def make_user_manifest(n_users: int, seed: int, population=None, behavior=None) -> UserSetManifest:
    from .users import BehaviorConfig, PopulationConfig, sample_user

    population = population or PopulationConfig()
    behavior = behavior or BehaviorConfig()
    words = np.random.SeedSequence(seed).generate_state(n_users, dtype=np.uint32)
    seeds = tuple(int(w) for w in words)
    digests = tuple(
        profile_digest(sample_user(s, population, behavior).profile) for s in seeds
    )
    return UserSetManifest(seeds=seeds, digests=digests)


def save_manifest(manifest: UserSetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"version": 1, "seeds": list(manifest.seeds), "digests": list(manifest.digests)},
            fh,
            indent=2,
        )
        fh.write("\n")


def load_manifest(path) -> UserSetManifest:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return UserSetManifest(seeds=tuple(data["seeds"]), digests=tuple(data["digests"]))


# ---------------------------------------------------------------------------
# Rollouts

@dataclass(frozen=True)
class GameRow:
    strategy: str
    game_index: int
    user_seed: int
    trust_mean: float        # mean of the 12 per-exchange reported trust values
    success_total: int
    duration_total: float
    action_counts: tuple[int, int, int, int]

    @property
    def efficiency(self) -> float:
        return self.success_total / self.duration_total

    @property
    def cooperation(self) -> float:
        return self.efficiency * self.trust_mean


def play_game(env: DialogEnv, policy: Policy, user_seed: int) -> GameRow:
    dialog = env.reset(user_seed)
    reported: list[int] = []
    success = 0
    duration = 0.0
    counts = [0, 0, 0, 0]
    terminal = False
    while not terminal:
        action = policy.decide(dialog)
        counts[int(action)] += 1
        dialog, _, terminal, info = env.step(action)
        reported.append(info["reported_trust"])
        success += info["outcome"].score
        duration += info["outcome"].duration_s
    return GameRow(
        strategy=policy.name,
        game_index=-1,
        user_seed=user_seed,
        trust_mean=float(np.mean(reported)),
        success_total=success,
        duration_total=duration,
        action_counts=tuple(counts),
    )


# ---------------------------------------------------------------------------
# Statistics

def welch_t_test(sample_a, sample_b) -> tuple[float, float, float]:
    """Two-sided Welch t-test; returns (t, df, p)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("both samples need at least 2 observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise ValueError("zero variance in both samples")
    se2 = va / a.size + vb / b.size
    t = (a.mean() - b.mean()) / np.sqrt(se2)
    df = se2**2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
    )
    p = 2.0 * float(sstats.t.sf(abs(t), df))
    return float(t), float(df), min(p, 1.0)


def bonferroni(p_raw: float, n_comparisons: int) -> float:
    return min(1.0, p_raw * n_comparisons)


def _pairwise_welch(sa: np.ndarray, sb: np.ndarray) -> tuple[float, float, float]:
    """Welch test that tolerates degenerate (constant) metric samples.

    Two strategies can produce constant identical metrics (e.g. task
    success under policies that always pick the best option); report
    those as no-difference rather than failing the whole evaluation.
    """
    if sa.var(ddof=1) == 0 and sb.var(ddof=1) == 0:
        if sa.mean() == sb.mean():
            return 0.0, float(len(sa) + len(sb) - 2), 1.0
        t = math.inf if sa.mean() > sb.mean() else -math.inf
        return t, float(len(sa) + len(sb) - 2), 0.0
    return welch_t_test(sa, sb)


# ---------------------------------------------------------------------------
# Report

@dataclass(frozen=True)
class StrategySummary:
    name: str
    n_games: int
    trust_mean: float
    trust_std: float
    success_mean: float
    success_std: float
    duration_mean: float
    duration_std: float
    action_share: tuple[float, float, float, float]

    @property
    def efficiency(self) -> float:
        """Population efficiency: mean success over mean duration."""
        return self.success_mean / self.duration_mean

    @property
    def cooperation(self) -> float:
        return self.efficiency * self.trust_mean


@dataclass(frozen=True)
class PairwiseTest:
    metric: str
    strategy_a: str
    strategy_b: str
    t: float
    df: float
    p_raw: float
    p_adjusted: float


@dataclass(frozen=True)
class EvalReport:
    seed: int
    n_games: int
    summaries: tuple[StrategySummary, ...]
    rows: tuple[GameRow, ...]
    pairwise: tuple[PairwiseTest, ...]
    n_comparisons: int

    def summary(self, name: str) -> StrategySummary:
        for s in self.summaries:
            if s.name == name:
                return s
        raise KeyError(name)

    def metric_samples(self, name: str, metric: str) -> np.ndarray:
        rows = [r for r in self.rows if r.strategy == name]
        return np.array([_metric_of(r, metric) for r in rows])

    def test(self, metric: str, a: str, b: str) -> PairwiseTest:
        for pt in self.pairwise:
            if pt.metric == metric and {pt.strategy_a, pt.strategy_b} == {a, b}:
                return pt
        raise KeyError((metric, a, b))


def _metric_of(row: GameRow, metric: str) -> float:
    if metric == "trust":
        return row.trust_mean
    if metric == "success":
        return float(row.success_total)
    if metric == "duration":
        return row.duration_total
    if metric == "efficiency":
        return row.efficiency
    if metric == "cooperation":
        return row.cooperation
    raise ValueError(f"unknown metric {metric!r}")


def baseline_policies() -> list[Policy]:
    return [
        static_policy(ProactiveAction.NONE),
        static_policy(ProactiveAction.NOTIFICATION),
        static_policy(ProactiveAction.SUGGESTION),
        static_policy(ProactiveAction.INTERVENTION),
        rule_based_policy(),
    ]


def run_eval(
    strategies: list[Policy],
    manifest: UserSetManifest,
    env_factory,
    seed: int = 0,
) -> EvalReport:
    """Play every strategy against the same user set; aggregate and test.

    ``env_factory(base_seed)`` must build a fresh DialogEnv whose per-game
    streams depend only on (base_seed, user_seed), which keeps the noise
    matched across strategies.
    """
    if len(strategies) < 2:
        raise ValueError("need at least two strategies to compare")
    names = [p.name for p in strategies]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate strategy names: {names}")
    if len(manifest) == 0:
        raise ValueError("empty user manifest")

    rows: list[GameRow] = []
    summaries: list[StrategySummary] = []
    for policy in strategies:
        env = env_factory(seed)
        strat_rows = []
        for gi, user_seed in enumerate(manifest.seeds):
            row = play_game(env, policy, user_seed)
            strat_rows.append(
                GameRow(
                    strategy=row.strategy,
                    game_index=gi,
                    user_seed=row.user_seed,
                    trust_mean=row.trust_mean,
                    success_total=row.success_total,
                    duration_total=row.duration_total,
                    action_counts=row.action_counts,
                )
            )
        rows.extend(strat_rows)
        trust = np.array([r.trust_mean for r in strat_rows])
        succ = np.array([float(r.success_total) for r in strat_rows])
        dur = np.array([r.duration_total for r in strat_rows])
        total_actions = sum(sum(r.action_counts) for r in strat_rows)
        share = tuple(
            sum(r.action_counts[i] for r in strat_rows) / total_actions
            for i in range(N_ACTIONS)
        )
        summaries.append(
            StrategySummary(
                name=policy.name,
                n_games=len(strat_rows),
                trust_mean=float(trust.mean()),
                trust_std=float(trust.std(ddof=1)),
                success_mean=float(succ.mean()),
                success_std=float(succ.std(ddof=1)),
                duration_mean=float(dur.mean()),
                duration_std=float(dur.std(ddof=1)),
                action_share=share,
            )
        )

    pairs = list(combinations(names, 2))
    n_comparisons = len(pairs)
    tests: list[PairwiseTest] = []
    by_name = {
        name: [r for r in rows if r.strategy == name] for name in names
    }
    for metric in EVAL_METRICS:
        for a, b in pairs:
            sa = np.array([_metric_of(r, metric) for r in by_name[a]])
            sb = np.array([_metric_of(r, metric) for r in by_name[b]])
            t, df, p = _pairwise_welch(sa, sb)
            tests.append(
                PairwiseTest(
                    metric=metric,
                    strategy_a=a,
                    strategy_b=b,
                    t=t,
                    df=df,
                    p_raw=p,
                    p_adjusted=bonferroni(p, n_comparisons),
                )
            )
    return EvalReport(
        seed=seed,
        n_games=len(manifest),
        summaries=tuple(summaries),
        rows=tuple(rows),
        pairwise=tuple(tests),
        n_comparisons=n_comparisons,
    )


# ---------------------------------------------------------------------------
# Export (byte-stable tabular text)

def export_report(report: EvalReport, out_dir) -> dict[str, str]:
    """Write summary, per-game rows, and the pairwise test matrix as TSV."""
    if not report.summaries:
        raise ValueError("empty report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(out_dir, "summary.tsv"),
        "games": os.path.join(out_dir, "games.tsv"),
        "pairwise": os.path.join(out_dir, "pairwise.tsv"),
    }

    with open(paths["summary"], "w", encoding="utf-8") as fh:
        fh.write(
            "strategy\tn_games\ttrust_mean\ttrust_std\tsuccess_mean\tsuccess_std\t"
            "duration_mean\tduration_std\tefficiency\tcooperation\t"
            "share_none\tshare_notification\tshare_suggestion\tshare_intervention\n"
        )
        for s in report.summaries:
            shares = "\t".join(f"{x:.6f}" for x in s.action_share)
            fh.write(
                f"{s.name}\t{s.n_games}\t{s.trust_mean:.6f}\t{s.trust_std:.6f}\t"
                f"{s.success_mean:.6f}\t{s.success_std:.6f}\t{s.duration_mean:.6f}\t"
                f"{s.duration_std:.6f}\t{s.efficiency:.6f}\t{s.cooperation:.6f}\t{shares}\n"
            )

    with open(paths["games"], "w", encoding="utf-8") as fh:
        fh.write(
            "strategy\tgame_index\tuser_seed\ttrust_mean\tsuccess_total\t"
            "duration_total\tefficiency\tcooperation\t"
            "n_none\tn_notification\tn_suggestion\tn_intervention\n"
        )
        for r in report.rows:
            counts = "\t".join(str(c) for c in r.action_counts)
            fh.write(
                f"{r.strategy}\t{r.game_index}\t{r.user_seed}\t{r.trust_mean:.6f}\t"
                f"{r.success_total}\t{r.duration_total:.6f}\t{r.efficiency:.6f}\t"
                f"{r.cooperation:.6f}\t{counts}\n"
            )

    with open(paths["pairwise"], "w", encoding="utf-8") as fh:
        fh.write("metric\tstrategy_a\tstrategy_b\tt\tdf\tp_raw\tp_adjusted\n")
        for pt in report.pairwise:
            fh.write(
                f"{pt.metric}\t{pt.strategy_a}\t{pt.strategy_b}\t{pt.t:.6f}\t"
                f"{pt.df:.6f}\t{pt.p_raw:.6e}\t{pt.p_adjusted:.6e}\n"
            )
    return paths
