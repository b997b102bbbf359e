"""Validation strategies, metrics, significance testing and power analysis.

Three fold plans: stratified k-fold within one participant, participant-
grouped k-fold, and leave-one-participant-out. Grouped plans are checked
exhaustively for participant leakage at construction time. Reports carry
per-fold and aggregate accuracy/precision/recall/F1 (error class positive)
plus a one-sample t-test of fold accuracies against the 50% chance level,
with the Student-t CDF evaluated through the regularized incomplete beta
function. Results are additionally split into the baseline / airborne
environment partitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special, stats

from .dataset import Dataset, DatasetConfig, build_dataset
from .errors import ParameterError, ValidationError
from .features import Modality
from .learn import (
    AdaBoostHp,
    ClassifierKind,
    ForestHp,
    MlpHp,
    predict,
    train,
)
from .pipeline import PreprocessConfig, PreprocessedSession, preprocess_session
from .seeding import derive_seed, rng_for
from .signals import AIRBORNE_ENVIRONMENTS, Environment, SessionBundle


class FoldStrategy(Enum):
    PER_PARTICIPANT_CV = "per_participant_cv"
    GROUPED_CV = "grouped_cv"
    LOPO = "lopo"


@dataclass(frozen=True)
class FoldPlan:
    strategy: FoldStrategy
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    participants: np.ndarray  # group key per sample
    group_key: str = "participant_id"

    def __post_init__(self):
        n = self.participants.size
        seen = np.zeros(n, dtype=int)
        for train_idx, test_idx in self.folds:
            seen[test_idx] += 1
            if np.intersect1d(train_idx, test_idx).size:
                raise ValidationError("fold has overlapping train and test indices")
            if self.strategy in (FoldStrategy.GROUPED_CV, FoldStrategy.LOPO):
                shared = set(self.participants[train_idx]) & set(self.participants[test_idx])
                if shared:
                    raise ValidationError(f"participant leakage across folds: {shared}")
        if not np.all(seen == 1):
            raise ValidationError("fold test sets must partition the samples")

    @property
    def n_folds(self) -> int:
        return len(self.folds)


def plan_folds(
    dataset: Dataset, strategy: FoldStrategy, k: int = 5, seed: int = 0
) -> FoldPlan:
    """Deterministic fold assignment for the requested strategy."""
    participants = dataset.participants
    unique = sorted(set(participants))
    y = dataset.y
    rng = rng_for(seed, f"folds:{strategy.value}")

    if strategy is FoldStrategy.PER_PARTICIPANT_CV:
        if len(unique) != 1:
            raise ParameterError(
                f"per-participant CV needs a single-participant dataset, got {len(unique)}"
            )
        fold_of = np.empty(len(dataset), dtype=int)
        for label in (0, 1):
            rows = np.flatnonzero(y == label)
            rows = rows[rng.permutation(rows.size)]
            for pos, row in enumerate(rows):
                fold_of[row] = pos % k
        folds = []
        everything = np.arange(len(dataset))
        for f in range(k):
            test = np.sort(everything[fold_of == f])
            train_idx = np.sort(everything[fold_of != f])
            folds.append((train_idx, test))
    elif strategy is FoldStrategy.GROUPED_CV:
        if k > len(unique):
            raise ParameterError(f"k={k} exceeds participant count {len(unique)}")
        order = list(unique)
        rng.shuffle(order)
        group_of = {pid: i % k for i, pid in enumerate(order)}
        folds = _folds_from_groups(participants, group_of, k)
    elif strategy is FoldStrategy.LOPO:
        if len(unique) < 2:
            raise ParameterError("leave-one-participant-out needs at least 2 participants")
        group_of = {pid: i for i, pid in enumerate(unique)}
        folds = _folds_from_groups(participants, group_of, len(unique))
    else:  # pragma: no cover
        raise ParameterError(f"unknown strategy {strategy}")

    return FoldPlan(strategy=strategy, folds=tuple(folds), participants=participants)


def _folds_from_groups(
    participants: np.ndarray, group_of: dict[str, int], n_groups: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    sample_group = np.array([group_of[p] for p in participants])
    everything = np.arange(participants.size)
    folds = []
    for g in range(n_groups):
        test = everything[sample_group == g]
        train_idx = everything[sample_group != g]
        folds.append((train_idx, test))
    return folds


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    """Standard binary metrics with the error class (1) positive.

    Zero-denominator precision/recall come back as 0 with a flag instead of
    NaN so aggregation stays finite.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ParameterError("cannot compute metrics of empty predictions")
    if y_true.shape != y_pred.shape:
        raise ParameterError("y_true and y_pred must have equal length")

    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    flags: list[str] = []

    accuracy = float(np.mean(y_true == y_pred))
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, flags = 0.0, flags + ["precision_undefined"]
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, flags = 0.0, flags + ["recall_undefined"]
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(accuracy, float(precision), float(recall), float(f1), tuple(flags))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    flags: tuple[str, ...] = ()


def _student_t_sf(t: float, df: int) -> float:
    """P(T > t) for t >= 0 via the regularized incomplete beta function."""
    x = df / (df + t * t)
    return 0.5 * float(special.betainc(df / 2.0, 0.5, x))


def t_test_vs_chance(fold_accuracies: np.ndarray, mu0: float = 0.5) -> TTestResult:
    """Two-sided one-sample t-test of fold accuracies against mu0."""
    acc = np.asarray(fold_accuracies, dtype=np.float64)
    if acc.size < 2:
        raise ParameterError("t-test needs at least 2 folds")
    df = acc.size - 1
    mean = float(acc.mean())
    sd = float(acc.std(ddof=1))
    if sd == 0.0:
        if mean == mu0:
            return TTestResult(t=0.0, p=1.0, df=df)
        return TTestResult(
            t=math.copysign(math.inf, mean - mu0), p=0.0, df=df, flags=("zero_variance",)
        )
    t = (mean - mu0) / (sd / math.sqrt(acc.size))
    return TTestResult(t=t, p=2.0 * _student_t_sf(abs(t), df), df=df)


# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------

ENVIRONMENT_PARTITIONS: dict[str, tuple[Environment, ...]] = {
    "baseline": (Environment.BASELINE,),
    "airborne": AIRBORNE_ENVIRONMENTS,
}

_METRIC_FIELDS = ("accuracy", "precision", "recall", "f1")


def _aggregate(metrics: list[Metrics]) -> dict[str, float]:
    out: dict[str, float] = {"n_folds": len(metrics)}
    for name in _METRIC_FIELDS:
        values = np.array([getattr(m, name) for m in metrics])
        out[f"{name}_mean_pct"] = float(values.mean() * 100.0)
        out[f"{name}_sd_pct"] = float(values.std(ddof=1) * 100.0) if values.size > 1 else 0.0
    return out


@dataclass(frozen=True)
class EvalReport:
    modality: str
    strategy: str
    classifier: str
    seed: int
    n_samples: int
    n_participants: int
    fold_metrics: tuple[dict, ...]
    aggregate: dict
    partitions: dict
    t_statistic: float
    p_value: float
    t_flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "strategy": self.strategy,
            "classifier": self.classifier,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "n_participants": self.n_participants,
            "fold_metrics": list(self.fold_metrics),
            "aggregate": self.aggregate,
            "partitions": self.partitions,
            "t_statistic": self.t_statistic,
            "p_value": self.p_value,
            "t_flags": list(self.t_flags),
        }


DEFAULT_HP = {
    ClassifierKind.RANDOM_FOREST: ForestHp(),
    ClassifierKind.ADABOOST: AdaBoostHp(),
    ClassifierKind.MLP: MlpHp(),
}


def evaluate_dataset(
    dataset: Dataset,
    plan: FoldPlan,
    classifier_kind: ClassifierKind,
    hp: ForestHp | AdaBoostHp | MlpHp | None = None,
    seed: int = 0,
) -> EvalReport:
    """Train/test across the fold plan and aggregate, overall and per
    environment partition."""
    hp = hp or DEFAULT_HP[classifier_kind]
    X, y = dataset.X, dataset.y
    env_values = dataset.environments

    fold_rows: list[dict] = []
    overall: list[Metrics] = []
    partition_metrics: dict[str, list[Metrics]] = {name: [] for name in ENVIRONMENT_PARTITIONS}
    for i, (train_idx, test_idx) in enumerate(plan.folds):
        model = train(
            classifier_kind,
            X[train_idx],
            y[train_idx],
            hp=hp,
            seed=derive_seed(seed, "fold-train", i),
            feature_names=dataset.feature_names,
        )
        labels, _ = predict(model, X[test_idx])
        metrics = compute_metrics(y[test_idx], labels)
        overall.append(metrics)
        row = {
            "fold": i,
            "n_test": int(test_idx.size),
            "test_participants": sorted(set(dataset.participants[test_idx])),
            **{name: getattr(metrics, name) for name in _METRIC_FIELDS},
            "flags": list(metrics.flags),
        }
        for part_name, environments in ENVIRONMENT_PARTITIONS.items():
            values = {e.value for e in environments}
            mask = np.isin(env_values[test_idx], list(values))
            if np.any(mask):
                part = compute_metrics(y[test_idx][mask], labels[mask])
                partition_metrics[part_name].append(part)
                row[f"{part_name}_accuracy"] = part.accuracy
        fold_rows.append(row)

    t_result = t_test_vs_chance(np.array([m.accuracy for m in overall]))
    partitions = {
        name: _aggregate(mets) for name, mets in partition_metrics.items() if mets
    }
    return EvalReport(
        modality=dataset.modality.value,
        strategy=plan.strategy.value,
        classifier=classifier_kind.value,
        seed=seed,
        n_samples=len(dataset),
        n_participants=len(dataset.participant_ids()),
        fold_metrics=tuple(fold_rows),
        aggregate=_aggregate(overall),
        partitions=partitions,
        t_statistic=t_result.t,
        p_value=t_result.p,
        t_flags=t_result.flags,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    k: int = 5
    dataset: DatasetConfig = DatasetConfig()
    preprocess: PreprocessConfig = PreprocessConfig()


def run_experiment(
    sessions: list[SessionBundle] | list[PreprocessedSession],
    modality: Modality,
    classifier_kind: ClassifierKind,
    strategy: FoldStrategy,
    config: ExperimentConfig | None = None,
    hp: ForestHp | AdaBoostHp | MlpHp | None = None,
) -> EvalReport:
    """Preprocess (if needed), build the dataset, plan folds, train and test.

    Accepts raw bundles or already-preprocessed sessions so callers can
    share preprocessing across modalities and strategies.
    """
    config = config or ExperimentConfig()
    preps = [
        s if isinstance(s, PreprocessedSession) else preprocess_session(s, config.preprocess)
        for s in sessions
    ]
    # The master seed fans out to the dataset draw, fold shuffle and training.
    ds_config = DatasetConfig(
        width_s=config.dataset.width_s,
        guard_s=config.dataset.guard_s,
        seed=derive_seed(config.seed, "dataset"),
        features=config.dataset.features,
    )
    dataset = build_dataset(preps, modality, ds_config)
    plan = plan_folds(dataset, strategy, k=config.k, seed=derive_seed(config.seed, "folds"))
    return evaluate_dataset(
        dataset, plan, classifier_kind, hp=hp, seed=derive_seed(config.seed, "eval")
    )


# ---------------------------------------------------------------------------
# Power analysis
# ---------------------------------------------------------------------------


class PowerKind(Enum):
    LOGISTIC_OR = "logistic_or"
    ANOVA_F = "anova_f"


def power_sample_size(
    kind: PowerKind | str,
    params: dict,
    alpha: float = 0.05,
    power: float = 0.80,
) -> int:
    """Smallest n meeting the requested power.

    logistic_or uses the normal-predictor logistic regression formula
    n = (z_{1-a/2} + z_{power})^2 / (p(1-p) ln(OR)^2) with p the event rate.
    anova_f searches n for a repeated-measures F test with noncentrality
    f^2 * m * n (m conditions), inverting noncentral-F power numerically.
    """
    kind = PowerKind(kind) if isinstance(kind, str) else kind
    if not (0 < alpha < 1 and 0 < power < 1):
        raise ParameterError("alpha and power must lie in (0, 1)")

    if kind is PowerKind.LOGISTIC_OR:
        odds_ratio = float(params["odds_ratio"])
        event_rate = float(params["event_rate"])
        if odds_ratio <= 0:
            raise ParameterError(f"odds ratio must be positive, got {odds_ratio}")
        if odds_ratio == 1.0:
            raise ParameterError("odds ratio 1 requires an infinite sample")
        if not 0 < event_rate < 1:
            raise ParameterError(f"event rate must be in (0, 1), got {event_rate}")
        z = special.ndtri(1 - alpha / 2.0) + special.ndtri(power)
        n = z * z / (event_rate * (1 - event_rate) * math.log(odds_ratio) ** 2)
        return max(1, math.ceil(n))

    effect_f = float(params["effect_size_f"])
    m = int(params["n_conditions"])
    if effect_f <= 0:
        raise ParameterError("effect size f = 0 requires an infinite sample")
    if m < 2:
        raise ParameterError("need at least 2 conditions")
    for n in range(2, 100001):
        df1 = m - 1
        df2 = (m - 1) * (n - 1)
        noncentrality = effect_f**2 * m * n
        f_crit = stats.f.isf(alpha, df1, df2)
        achieved = float(stats.ncf.sf(f_crit, df1, df2, noncentrality))
        if achieved >= power:
            return n
    raise ParameterError("no attainable sample size below 100000")
