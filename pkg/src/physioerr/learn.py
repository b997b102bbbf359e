"""Desk-scale classifiers with a uniform train/predict interface.

Random forest (bagged CART, Gini), discrete AdaBoost over decision stumps,
and a single-hidden-layer MLP trained by mini-batch gradient descent. All
three are deterministic given (X, y, hyperparameters, seed); forest and
AdaBoost are additionally invariant to training-row permutations (rows are
put into a canonical byte order before any seeded subsampling, and split
search breaks ties by fixed feature/threshold order). The MLP is sensitive
to row order through batch composition.

The error class is 1; predicted probability >= 0.5 maps to it (ties favour
recall on the safety-relevant class).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DegenerateLabelError,
    DivergenceError,
    ParameterError,
    SchemaError,
)
from .seeding import rng_for

MODEL_FORMAT_VERSION = 1


class ClassifierKind(Enum):
    RANDOM_FOREST = "random_forest"
    ADABOOST = "adaboost"
    MLP = "mlp"


@dataclass(frozen=True)
class ForestHp:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    features_per_split: str | int = "sqrt"


@dataclass(frozen=True)
class AdaBoostHp:
    n_rounds: int = 100
    stump_depth: int = 1


@dataclass(frozen=True)
class MlpHp:
    hidden_units: int = 64
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    l2: float = 1e-4


@dataclass(frozen=True)
class TrainedModel:
    kind: ClassifierKind
    feature_names: tuple[str, ...]
    hyperparameters: dict
    seed: int
    params: dict
    training_meta: dict


def _validate_training_inputs(X: np.ndarray, y: np.ndarray, min_rows: int = 10) -> None:
    if X.shape[0] != y.shape[0]:
        raise ParameterError(f"{X.shape[0]} rows vs {y.shape[0]} labels")
    if X.shape[0] < min_rows:
        raise ParameterError(f"need at least {min_rows} training rows, got {X.shape[0]}")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabelError(f"training labels contain a single class: {classes}")
    if not set(classes.tolist()) <= {0, 1}:
        raise ParameterError(f"labels must be binary 0/1, got {classes}")


def _canonical_row_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Deterministic row order independent of the incoming permutation."""
    contiguous = np.ascontiguousarray(X, dtype=np.float64)
    as_bytes = contiguous.view(
        np.dtype((np.void, contiguous.dtype.itemsize * contiguous.shape[1]))
    ).ravel()
    return np.lexsort((y, as_bytes))


# ---------------------------------------------------------------------------
# CART (shared by the forest and the boosted stumps)
# ---------------------------------------------------------------------------


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    idx: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
    n_candidates: int,
    rng: np.random.Generator | None,
) -> dict:
    node_w = weights[idx]
    total_w = node_w.sum()
    p1 = float((node_w * y[idx]).sum() / max(total_w, 1e-300))

    def leaf() -> dict:
        return {"leaf": p1, "n": int(idx.size)}

    if depth >= max_depth or idx.size < 2 * min_leaf or p1 <= 0.0 or p1 >= 1.0:
        return leaf()

    d = X.shape[1]
    if rng is not None and n_candidates < d:
        feats = np.sort(rng.choice(d, size=n_candidates, replace=False))
    else:
        feats = np.arange(d)

    values = X[np.ix_(idx, feats)]
    order = np.argsort(values, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(values, order, axis=0)
    w_sorted = node_w[order]
    w1_sorted = (node_w * y[idx])[order]

    cum_w = np.cumsum(w_sorted, axis=0)
    cum_w1 = np.cumsum(w1_sorted, axis=0)
    left_w = cum_w[:-1]
    left_1 = cum_w1[:-1]
    right_w = cum_w[-1] - left_w
    right_1 = cum_w1[-1] - left_1

    safe_l = np.maximum(left_w, 1e-300)
    safe_r = np.maximum(right_w, 1e-300)
    impurity = (
        left_w
        - (left_1**2 + (left_w - left_1) ** 2) / safe_l
        + right_w
        - (right_1**2 + (right_w - right_1) ** 2) / safe_r
    )

    m = idx.size
    positions = np.arange(1, m)[:, np.newaxis]
    valid = (sorted_vals[:-1] < sorted_vals[1:]) & (positions >= min_leaf) & (m - positions >= min_leaf)
    if not np.any(valid):
        return leaf()
    impurity = np.where(valid, impurity, np.inf)
    flat = int(np.argmin(impurity))
    split_pos, feat_pos = np.unravel_index(flat, impurity.shape)
    feature = int(feats[feat_pos])
    threshold = float(
        0.5 * (sorted_vals[split_pos, feat_pos] + sorted_vals[split_pos + 1, feat_pos])
    )

    go_left = X[idx, feature] <= threshold
    left_idx = idx[go_left]
    right_idx = idx[~go_left]
    if left_idx.size == 0 or right_idx.size == 0:  # numerical midpoint collapse
        return leaf()
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow_tree(X, y, weights, left_idx, depth + 1, max_depth, min_leaf, n_candidates, rng),
        "right": _grow_tree(X, y, weights, right_idx, depth + 1, max_depth, min_leaf, n_candidates, rng),
    }


def _tree_prob(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])

    def walk(node: dict, rows: np.ndarray) -> None:
        if "leaf" in node:
            out[rows] = node["leaf"]
            return
        mask = X[rows, node["feature"]] <= node["threshold"]
        walk(node["left"], rows[mask])
        walk(node["right"], rows[~mask])

    walk(tree, np.arange(X.shape[0]))
    return out


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


def train_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    hp: ForestHp | None = None,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    """Bagged Gini CART; per-tree seeds derive from the master seed.

    Out-of-bag accuracy over rows left out of at least one bootstrap is
    recorded in training_meta.
    """
    hp = hp or ForestHp()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _validate_training_inputs(X, y)

    order = _canonical_row_order(X, y)
    Xc, yc = X[order], y[order]
    n, d = Xc.shape
    if hp.features_per_split == "sqrt":
        k = max(1, int(math.sqrt(d)))
    else:
        k = int(hp.features_per_split)
        if not 1 <= k <= d:
            raise ParameterError(f"features_per_split {k} outside [1, {d}]")

    uniform = np.ones(n)
    trees: list[dict] = []
    oob_votes = np.zeros(n)
    oob_counts = np.zeros(n)
    for i in range(hp.n_trees):
        rng = rng_for(seed, "tree", i)
        boot = rng.integers(0, n, size=n)
        tree = _grow_tree(Xc, yc, uniform, boot, 0, hp.max_depth, hp.min_leaf, k, rng)
        trees.append(tree)
        oob_mask = np.ones(n, dtype=bool)
        oob_mask[boot] = False
        if np.any(oob_mask):
            votes = (_tree_prob(tree, Xc[oob_mask]) >= 0.5).astype(np.float64)
            oob_votes[oob_mask] += votes
            oob_counts[oob_mask] += 1.0

    covered = oob_counts > 0
    oob_accuracy = (
        float(np.mean(((oob_votes[covered] / oob_counts[covered]) >= 0.5).astype(np.int64) == yc[covered]))
        if np.any(covered)
        else float("nan")
    )
    return TrainedModel(
        kind=ClassifierKind.RANDOM_FOREST,
        feature_names=tuple(feature_names or ()),
        hyperparameters=asdict(hp),
        seed=seed,
        params={"trees": trees},
        training_meta={"oob_accuracy": oob_accuracy, "n_oob_rows": int(covered.sum())},
    )


# ---------------------------------------------------------------------------
# AdaBoost
# ---------------------------------------------------------------------------

_ADA_EPS = 1e-10


def train_adaboost(
    X: np.ndarray,
    y: np.ndarray,
    hp: AdaBoostHp | None = None,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    """Discrete AdaBoost over weighted-Gini stumps.

    Stops early when a round's weighted error reaches 0 (the stump is kept)
    or 0.5 (the stump is discarded); sample weights are renormalised to sum
    to 1 after every round.
    """
    hp = hp or AdaBoostHp()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _validate_training_inputs(X, y)

    n = X.shape[0]
    y_pm = 2.0 * y - 1.0
    w = np.full(n, 1.0 / n)
    all_rows = np.arange(n)
    stumps: list[dict] = []
    alphas: list[float] = []
    round_errors: list[float] = []
    weight_sums: list[float] = []
    for _ in range(hp.n_rounds):
        stump = _grow_tree(X, y, w, all_rows, 0, hp.stump_depth, 1, X.shape[1], None)
        h = np.where(_tree_prob(stump, X) >= 0.5, 1.0, -1.0)
        err = float(w[h != y_pm].sum())
        if err >= 0.5:
            break
        alpha = 0.5 * math.log((1.0 - err + _ADA_EPS) / (err + _ADA_EPS))
        stumps.append(stump)
        alphas.append(alpha)
        round_errors.append(err)
        w = w * np.exp(-alpha * y_pm * h)
        w = w / w.sum()
        weight_sums.append(float(w.sum()))
        if err == 0.0:
            break
    if not stumps:
        raise DegenerateLabelError("no stump beat 0.5 weighted error on round 1")
    return TrainedModel(
        kind=ClassifierKind.ADABOOST,
        feature_names=tuple(feature_names or ()),
        hyperparameters=asdict(hp),
        seed=seed,
        params={"stumps": stumps, "alphas": alphas},
        training_meta={"round_errors": round_errors, "weight_sums": weight_sums},
    )


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_loss_and_grads(
    params: dict[str, np.ndarray], Xs: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy + L2 loss and its analytic gradients.

    Kept as a pure function of (params, batch) so the gradients can be
    checked against central finite differences.
    """
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    m = Xs.shape[0]
    z1 = Xs @ W1 + b1
    a1 = np.maximum(z1, 0.0)
    z2 = (a1 @ W2 + b2).ravel()
    p = _sigmoid(z2)
    eps = 1e-12
    data_loss = -float(np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    reg = 0.5 * l2 * (float(np.sum(W1**2)) + float(np.sum(W2**2)))
    loss = data_loss + reg

    dz2 = ((p - y) / m)[:, np.newaxis]
    grad_W2 = a1.T @ dz2 + l2 * W2
    grad_b2 = dz2.sum(axis=0)
    da1 = dz2 @ W2.T
    dz1 = da1 * (z1 > 0)
    grad_W1 = Xs.T @ dz1 + l2 * W1
    grad_b1 = dz1.sum(axis=0)
    return loss, {"W1": grad_W1, "b1": grad_b1, "W2": grad_W2, "b2": grad_b2}


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    hp: MlpHp | None = None,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    """Single hidden layer, ReLU, logistic output, fixed-rate mini-batch GD.

    Features are z-scored with statistics of the training split; the
    standardisation lives inside the model so test folds never leak into
    it. Zero epochs leave the seeded initialisation untouched.
    """
    hp = hp or MlpHp()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_training_inputs(X, y.astype(np.int64))

    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma = np.where(sigma == 0, 1.0, sigma)
    Xs = (X - mu) / sigma

    n, d = Xs.shape
    h = hp.hidden_units
    rng = rng_for(seed, "mlp-init")
    lim1 = math.sqrt(6.0 / (d + h))
    lim2 = math.sqrt(6.0 / (h + 1))
    params = {
        "W1": rng.uniform(-lim1, lim1, size=(d, h)),
        "b1": np.zeros(h),
        "W2": rng.uniform(-lim2, lim2, size=(h, 1)),
        "b2": np.zeros(1),
    }

    shuffle_rng = rng_for(seed, "mlp-shuffle")
    final_loss = float("nan")
    for epoch in range(hp.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            rows = perm[start : start + hp.batch_size]
            loss, grads = mlp_loss_and_grads(params, Xs[rows], y[rows], hp.l2)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            for key in params:
                params[key] = params[key] - hp.learning_rate * grads[key]
        final_loss, _ = mlp_loss_and_grads(params, Xs, y, hp.l2)
        if not math.isfinite(final_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)

    return TrainedModel(
        kind=ClassifierKind.MLP,
        feature_names=tuple(feature_names or ()),
        hyperparameters=asdict(hp),
        seed=seed,
        params={
            "mu": mu,
            "sigma": sigma,
            "W1": params["W1"],
            "b1": params["b1"],
            "W2": params["W2"],
            "b2": params["b2"],
        },
        training_meta={"final_loss": final_loss},
    )


# ---------------------------------------------------------------------------
# Prediction and serialization
# ---------------------------------------------------------------------------


def _forest_prob(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    votes = np.stack([(_tree_prob(t, X) >= 0.5).astype(np.float64) for t in model.params["trees"]])
    return votes.mean(axis=0)


def _adaboost_prob(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    score = np.zeros(X.shape[0])
    for stump, alpha in zip(model.params["stumps"], model.params["alphas"]):
        score += alpha * np.where(_tree_prob(stump, X) >= 0.5, 1.0, -1.0)
    return _sigmoid(2.0 * score)


def _mlp_prob(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    p = model.params
    Xs = (X - p["mu"]) / p["sigma"]
    a1 = np.maximum(Xs @ p["W1"] + p["b1"], 0.0)
    return _sigmoid((a1 @ p["W2"] + p["b2"]).ravel())


def predict(
    model: TrainedModel, X: np.ndarray, feature_names: tuple[str, ...] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(labels, probabilities); probability >= 0.5 maps to the error class.

    When feature_names are supplied they must match the model's, either
    verbatim or as a column permutation (columns are realigned by name).
    """
    X = np.asarray(X, dtype=np.float64)
    if feature_names is not None and model.feature_names:
        names = tuple(feature_names)
        if names != model.feature_names:
            if sorted(names) != sorted(model.feature_names):
                raise SchemaError("feature names do not match the trained model")
            lookup = {name: i for i, name in enumerate(names)}
            X = X[:, [lookup[name] for name in model.feature_names]]
    if model.kind is ClassifierKind.RANDOM_FOREST:
        probs = _forest_prob(model, X)
    elif model.kind is ClassifierKind.ADABOOST:
        probs = _adaboost_prob(model, X)
    else:
        probs = _mlp_prob(model, X)
    return (probs >= 0.5).astype(np.int64), probs


_TRAINERS = {
    ClassifierKind.RANDOM_FOREST: train_random_forest,
    ClassifierKind.ADABOOST: train_adaboost,
    ClassifierKind.MLP: train_mlp,
}


def train(
    kind: ClassifierKind,
    X: np.ndarray,
    y: np.ndarray,
    hp: ForestHp | AdaBoostHp | MlpHp | None = None,
    seed: int = 0,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    return _TRAINERS[kind](X, y, hp=hp, seed=seed, feature_names=feature_names)


def _jsonify(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "shape": list(obj.shape)}
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _unjsonify(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=np.float64).reshape(obj["shape"])
        return {k: _unjsonify(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjsonify(v) for v in obj]
    return obj


def model_to_json_bytes(model: TrainedModel) -> bytes:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "feature_names": list(model.feature_names),
        "hyperparameters": _jsonify(model.hyperparameters),
        "seed": model.seed,
        "params": _jsonify(model.params),
        "training_meta": _jsonify(model.training_meta),
    }
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_json_bytes(model))


def load_model(path: str | Path) -> TrainedModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise SchemaError(f"unsupported model format {payload.get('format_version')}")
    return TrainedModel(
        kind=ClassifierKind(payload["kind"]),
        feature_names=tuple(payload["feature_names"]),
        hyperparameters=_unjsonify(payload["hyperparameters"]),
        seed=payload["seed"],
        params=_unjsonify(payload["params"]),
        training_meta=_unjsonify(payload["training_meta"]),
    )
