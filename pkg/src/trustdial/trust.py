"""Agent-visible trust estimation and ordinal classification metrics.

The agent never sees latent trust directly. The default estimator applies
an ordinal confusion kernel to the user's (discretized) trust state: a
5x5 row-stochastic matrix whose rows concentrate mass on the true class,
its neighbours, and a pull toward the population's modal classes. The
default kernel is calibrated so aggregate metrics over simulated
exchanges land in the reported bands (eA near 0.9 with moderate F1,
kappa, and rank correlation).

A trainable multinomial linear classifier over exchange features is
included for ablation and for serving human sessions, where no ground
truth exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .game import ProactiveAction, StepOutcome, TaskStep
from .users import GENDERS, UserProfile

N_TRUST_CLASSES = 5


class KernelError(ValueError):
    """Malformed noise kernel."""


@dataclass(frozen=True)
class ExchangeRecord:
    """Feature bundle for one system-user exchange."""

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
    step_index: int
    complexity: int
    duration_s: float
    score: int
    asked_help: bool
    requested_suggestion: bool
    agent_action: ProactiveAction


def make_exchange_record(profile: UserProfile, step: TaskStep,
                         outcome: StepOutcome) -> ExchangeRecord:
    return ExchangeRecord(
        age=profile.age,
        gender=profile.gender,
        technical_affinity=profile.technical_affinity,
        propensity_to_trust=profile.propensity_to_trust,
        domain_expertise=profile.domain_expertise,
        openness=profile.openness,
        conscientiousness=profile.conscientiousness,
        extraversion=profile.extraversion,
        agreeableness=profile.agreeableness,
        neuroticism=profile.neuroticism,
        step_index=step.index,
        complexity=step.complexity,
        duration_s=outcome.duration_s,
        score=outcome.score,
        asked_help=outcome.user_asked_help,
        requested_suggestion=outcome.user_requested_suggestion,
        agent_action=outcome.agent_action,
    )


# Fixed feature layout; serialized records are stable across languages.
FEATURE_NAMES: tuple[str, ...] = (
    "age",
    "gender_female",
    "gender_male",
    "gender_nonbinary",
    "technical_affinity",
    "propensity_to_trust",
    "domain_expertise",
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
    "step_index",
    "complexity",
    "duration_s",
    "score",
    "asked_help",
    "requested_suggestion",
    "action_none",
    "action_notification",
    "action_suggestion",
    "action_intervention",
)
FEATURE_DIM = len(FEATURE_NAMES)


def encode_record(record: ExchangeRecord) -> np.ndarray:
    vec = np.zeros(FEATURE_DIM)
    vec[0] = record.age
    vec[1 + GENDERS.index(record.gender)] = 1.0
    vec[4] = record.technical_affinity
    vec[5] = record.propensity_to_trust
    vec[6] = record.domain_expertise
    vec[7] = record.openness
    vec[8] = record.conscientiousness
    vec[9] = record.extraversion
    vec[10] = record.agreeableness
    vec[11] = record.neuroticism
    vec[12] = record.step_index
    vec[13] = record.complexity
    vec[14] = record.duration_s
    vec[15] = record.score
    vec[16] = float(record.asked_help)
    vec[17] = float(record.requested_suggestion)
    vec[18 + int(record.agent_action)] = 1.0
    if not np.all(np.isfinite(vec)):
        raise ValueError("non-finite feature value in exchange record")
    return vec


# ---------------------------------------------------------------------------
# Ordinal noise kernels

def validate_kernel(kernel: np.ndarray) -> np.ndarray:
    k = np.asarray(kernel, dtype=float)
    if k.shape != (N_TRUST_CLASSES, N_TRUST_CLASSES):
        raise KernelError(f"kernel must be 5x5, got {k.shape}")
    if np.any(k < 0):
        raise KernelError("kernel has negative entries")
    sums = k.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise KernelError(f"kernel rows must sum to 1, got {sums}")
    return k


def identity_kernel() -> np.ndarray:
    return np.eye(N_TRUST_CLASSES)


def make_ordinal_kernel(
    p_adjacent: float,
    p_two_off: float = 0.0,
    center_pull: float = 0.0,
    center_weights: Sequence[float] = (0.0, 0.3, 0.4, 0.3, 0.0),
) -> np.ndarray:
    """Row-stochastic kernel: local ordinal confusion plus a modal pull.

    Each row places mass ``p_adjacent`` on each neighbour class and
    ``p_two_off`` two classes away (clipped at the boundaries and
    renormalized), then mixes with weight ``center_pull`` toward
    ``center_weights`` — the tendency of a classifier trained on
    imbalanced ordinal data to fall back on the frequent middle classes.
    """
    center = np.asarray(center_weights, dtype=float)
    if center.shape != (N_TRUST_CLASSES,) or np.any(center < 0):
        raise KernelError("center_weights must be 5 non-negative weights")
    if center_pull > 0 and center.sum() <= 0:
        raise KernelError("center_weights must have positive mass")
    if center.sum() > 0:
        center = center / center.sum()
    local = np.zeros((N_TRUST_CLASSES, N_TRUST_CLASSES))
    for i in range(N_TRUST_CLASSES):
        local[i, i] = 1.0 - 2.0 * p_adjacent - 2.0 * p_two_off
        if local[i, i] < 0:
            raise KernelError("p_adjacent/p_two_off leave no diagonal mass")
        for d, p in ((1, p_adjacent), (2, p_two_off)):
            for j in (i - d, i + d):
                if 0 <= j < N_TRUST_CLASSES:
                    local[i, j] = p
        local[i] /= local[i].sum()
    kernel = (1.0 - center_pull) * local + center_pull * center[None, :]
    return validate_kernel(kernel)


# Calibrated default (see tests/test_acceptance.py, estimator criterion).
DEFAULT_KERNEL_PARAMS = {
    "p_adjacent": 0.08,
    "p_two_off": 0.055,
    "center_pull": 0.30,
    "center_weights": (0.02, 0.28, 0.40, 0.26, 0.04),
}


def default_kernel() -> np.ndarray:
    return make_ordinal_kernel(**DEFAULT_KERNEL_PARAMS)


class Estimator(Protocol):
    def estimate(self, record: Optional[ExchangeRecord], ground_truth: Optional[int],
                 rng: np.random.Generator) -> int: ...


class KernelEstimator:
    """Perturbs the true discrete trust state with an ordinal confusion kernel."""

    def __init__(self, kernel: Optional[np.ndarray] = None):
        self.kernel = validate_kernel(kernel if kernel is not None else default_kernel())

    def estimate(self, record: Optional[ExchangeRecord], ground_truth: Optional[int],
                 rng: np.random.Generator) -> int:
        if ground_truth is None:
            raise ValueError("kernel estimator needs the true trust state")
        if not 1 <= ground_truth <= 5:
            raise ValueError(f"ground truth {ground_truth} outside 1..5")
        row = self.kernel[ground_truth - 1]
        return int(rng.choice(N_TRUST_CLASSES, p=row)) + 1


class RandomEstimator:
    """Uniform random guesser; the control for the metric floor."""

    def estimate(self, record: Optional[ExchangeRecord], ground_truth: Optional[int],
                 rng: np.random.Generator) -> int:
        return int(rng.integers(1, 6))


class LinearTrustModel:
    """Multinomial logistic regression over exchange features.

    Trainable on synthetic (record, true trust) pairs; used where no
    ground truth is available at estimation time (human sessions).
    """

    def __init__(self):
        self.weights: Optional[np.ndarray] = None  # (FEATURE_DIM + 1, 5)
        self.mean: Optional[np.ndarray] = None
        self.scale: Optional[np.ndarray] = None

    def fit(self, features: np.ndarray, labels: np.ndarray,
            epochs: int = 60, lr: float = 0.1, seed: int = 0) -> "LinearTrustModel":
        x = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=int) - 1
        if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
            raise ValueError("features/labels shape mismatch")
        self.mean = x.mean(axis=0)
        self.scale = x.std(axis=0)
        self.scale[self.scale == 0] = 1.0
        xs = (x - self.mean) / self.scale
        xs = np.hstack([xs, np.ones((xs.shape[0], 1))])
        rng = np.random.default_rng(seed)
        w = rng.normal(0, 0.01, size=(xs.shape[1], N_TRUST_CLASSES))
        onehot = np.eye(N_TRUST_CLASSES)[y]
        n = xs.shape[0]
        for _ in range(epochs):
            logits = xs @ w
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            grad = xs.T @ (p - onehot) / n
            w -= lr * grad
        self.weights = w
        return self

    def estimate(self, record: Optional[ExchangeRecord], ground_truth: Optional[int],
                 rng: np.random.Generator) -> int:
        if record is None:
            raise ValueError("linear trust model needs an exchange record")
        if self.weights is None:
            raise ValueError("model is not fitted")
        vec = (encode_record(record) - self.mean) / self.scale
        logits = np.append(vec, 1.0) @ self.weights
        return int(np.argmax(logits)) + 1


# ---------------------------------------------------------------------------
# Ordinal classification metrics

def _check_pairs(pairs: Sequence[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise ValueError("no (truth, estimate) pairs")
    truth = np.array([p[0] for p in pairs], dtype=int)
    est = np.array([p[1] for p in pairs], dtype=int)
    if truth.min() < 1 or truth.max() > 5 or est.min() < 1 or est.max() > 5:
        raise ValueError("trust values must lie in 1..5")
    return truth, est


def confusion_matrix(pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    truth, est = _check_pairs(pairs)
    m = np.zeros((N_TRUST_CLASSES, N_TRUST_CLASSES), dtype=int)
    for t, e in zip(truth, est):
        m[t - 1, e - 1] += 1
    return m


def macro_f1(pairs: Sequence[tuple[int, int]]) -> float:
    """Macro F1 over the classes observed in truth or estimates."""
    truth, est = _check_pairs(pairs)
    classes = sorted(set(truth) | set(est))
    scores = []
    for c in classes:
        tp = int(np.sum((truth == c) & (est == c)))
        fp = int(np.sum((truth != c) & (est == c)))
        fn = int(np.sum((truth == c) & (est != c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall)
                      if precision + recall else 0.0)
    return float(np.mean(scores))


def cohens_kappa(pairs: Sequence[tuple[int, int]]) -> float:
    truth, est = _check_pairs(pairs)
    n = len(truth)
    p_o = float(np.mean(truth == est))
    p_e = 0.0
    for c in range(1, 6):
        p_e += (np.sum(truth == c) / n) * (np.sum(est == c) / n)
    if abs(1.0 - p_e) < 1e-12:
        # both raters constant: perfect if they agree, else no skill shown
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(pairs: Sequence[tuple[int, int]]) -> float:
    """Rank correlation with average ranks for ties; 0 if either side is constant."""
    truth, est = _check_pairs(pairs)
    rt = _average_ranks(truth.astype(float))
    re = _average_ranks(est.astype(float))
    st, se = rt.std(), re.std()
    if st == 0 or se == 0:
        return 0.0
    return float(np.mean((rt - rt.mean()) * (re - re.mean())) / (st * se))


def extended_accuracy(pairs: Sequence[tuple[int, int]]) -> float:
    """Fraction of estimates within one ordinal step of the truth."""
    truth, est = _check_pairs(pairs)
    return float(np.mean(np.abs(truth - est) <= 1))


def classifier_metrics(pairs: Sequence[tuple[int, int]]) -> dict[str, float]:
    return {
        "f1": macro_f1(pairs),
        "kappa": cohens_kappa(pairs),
        "rho": spearman_rho(pairs),
        "eA": extended_accuracy(pairs),
    }


# ---------------------------------------------------------------------------
# Kernel config I/O (5x5 row-stochastic matrix as structured text)

def save_kernel(kernel: np.ndarray, path) -> None:
    k = validate_kernel(kernel)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# trust noise kernel: row = true class 1..5, col = estimated class 1..5\n")
        for row in k:
            fh.write("\t".join(f"{v:.10f}" for v in row) + "\n")


def load_kernel(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) for v in line.split("\t")])
    kernel = np.array(rows)
    # renormalize away text round-off before validating
    if kernel.ndim == 2 and kernel.shape == (5, 5) and np.all(kernel >= 0):
        sums = kernel.sum(axis=1, keepdims=True)
        if np.all(np.abs(sums - 1.0) < 1e-6):
            kernel = kernel / sums
    return validate_kernel(kernel)
