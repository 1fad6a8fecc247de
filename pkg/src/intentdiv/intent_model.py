"""Softmax intent predictor trained with summed multi-label cross-entropy."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import IntentDistribution, IntentSpace

LOG_FLOOR = 1e-12

FEATURE_NAMES = (
    "session_length",
    "session_consumptions",
    "time_since_last_session",
    "avg_completion_ratio",
    "avg_item_length",
    "past_activity_level",
    "repeated_consumption_ratio",
    "unique_clusters_consumed",
    "unique_creators",
    "hour_sin",
    "hour_cos",
)


@dataclass
class Dataset:
    """Feature matrix ``X`` (n x d) and multi-hot intent labels ``Y`` (n x |V|)."""

    X: np.ndarray
    Y: np.ndarray
    feature_names: tuple
    intents: tuple

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or len(self.X) != len(self.Y):
            raise ValueError("X and Y must be 2-d with the same number of rows")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names does not match X")
        if self.Y.shape[1] != len(self.intents):
            raise ValueError("intents does not match Y")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features must be finite")
        if len(self.Y) and not np.all(self.Y.max(axis=1) == 1):
            raise ValueError("every example needs at least one active intent label")

    def __len__(self):
        return len(self.X)

    def subset(self, idx):
        return Dataset(self.X[idx], self.Y[idx], self.feature_names, self.intents)

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        first = parts[0]
        return cls(np.vstack([p.X for p in parts]), np.vstack([p.Y for p in parts]),
                   first.feature_names, first.intents)


@dataclass
class IntentModelParams:
    W: np.ndarray
    b: np.ndarray
    feature_names: tuple
    intents: tuple
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def zeros(cls, feature_names, intents):
        d, k = len(feature_names), len(intents)
        return cls(np.zeros((k, d)), np.zeros(k), tuple(feature_names), tuple(intents),
                   np.zeros(d), np.ones(d))

    def copy(self):
        return IntentModelParams(self.W.copy(), self.b.copy(), self.feature_names,
                                 self.intents, self.mean.copy(), self.std.copy())

    def to_json(self) -> str:
        doc = {"intents": list(self.intents), "feature_names": list(self.feature_names),
               "W": self.W.tolist(), "b": self.b.tolist(),
               "standardization": {"mean": self.mean.tolist(), "std": self.std.tolist()}}
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        doc = json.loads(text)
        st = doc["standardization"]
        return cls(np.array(doc["W"], dtype=float), np.array(doc["b"], dtype=float),
                   tuple(doc["feature_names"]), tuple(doc["intents"]),
                   np.array(st["mean"], dtype=float), np.array(st["std"], dtype=float))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 20
    batch_size: int = 256
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _standardize(p: IntentModelParams, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != p.W.shape[1]:
        raise ValueError(f"expected {p.W.shape[1]} features, got {X.shape[-1]}")
    return (X - p.mean) / p.std


def predict_proba(p: IntentModelParams, X) -> np.ndarray:
    """Row-wise intent probabilities for a feature matrix."""
    return _softmax(_standardize(p, X) @ p.W.T + p.b)


def predict_intents(p: IntentModelParams, x) -> IntentDistribution:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict_intents takes a single feature vector")
    probs = predict_proba(p, x[None, :])[0]
    return IntentDistribution(IntentSpace(p.intents), probs)


def loss(p: IntentModelParams, X, Y, l2: float = 0.0) -> float:
    if len(X) == 0:
        raise ValueError("empty batch")
    P = predict_proba(p, X)
    return float(-(np.asarray(Y) * np.log(np.maximum(P, LOG_FLOOR))).sum()
                 + l2 * (p.W ** 2).sum())


def gradient(p: IntentModelParams, X, Y, l2: float = 0.0):
    """Analytic gradient of :func:`loss` with respect to ``(W, b)``."""
    Xs = _standardize(p, X)
    Y = np.asarray(Y, dtype=np.float64)
    P = _softmax(Xs @ p.W.T + p.b)
    # d/dz of -sum_v y_v log softmax_v(z) is (sum_v y_v) * softmax - y
    G = Y.sum(axis=1, keepdims=True) * P - Y
    return G.T @ Xs + 2.0 * l2 * p.W, G.sum(axis=0)


def train(data: Dataset, cfg: TrainConfig) -> IntentModelParams:
    """Mini-batch gradient descent from zero weights.

    Features are standardized with training-set statistics that are stored on
    the returned parameters. Steps use the batch-mean gradient.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    p = IntentModelParams.zeros(data.feature_names, data.intents)
    p.mean = data.X.mean(axis=0)
    std = data.X.std(axis=0)
    p.std = np.where(std > 0, std, 1.0)
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            gW, gb = gradient(p, data.X[idx], data.Y[idx], cfg.l2 * len(idx) / n)
            p.W -= cfg.learning_rate * gW / len(idx)
            p.b -= cfg.learning_rate * gb / len(idx)
    return p


def auc(scores, labels):
    """Area under the ROC curve from the Mann-Whitney rank statistic.

    Returns ``None`` when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) > 0.5
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def reliability_table(pred, labels, n_bins=10):
    """Equal-width bins of predicted probability.

    One row per bin: ``(lo, hi, count, mean_prediction, label_rate)``; empty
    bins carry ``None`` for the two means.
    """
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    which = np.clip(np.digitize(pred, edges[1:-1]), 0, n_bins - 1)
    rows = []
    for b in range(n_bins):
        mask = which == b
        cnt = int(mask.sum())
        rows.append((float(edges[b]), float(edges[b + 1]), cnt,
                     float(pred[mask].mean()) if cnt else None,
                     float(labels[mask].mean()) if cnt else None))
    return rows


def evaluate_predictions(P, Y, intents, n_bins=10):
    P = np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(P) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    out = {"auc_per_intent": {}, "calibration_ratio_per_intent": {}, "reliability": {}}
    for k, v in enumerate(intents):
        out["auc_per_intent"][v] = auc(P[:, k], Y[:, k])
        label_mean = Y[:, k].mean()
        out["calibration_ratio_per_intent"][v] = (
            float(P[:, k].mean() / label_mean) if label_mean > 0 else None)
        out["reliability"][v] = reliability_table(P[:, k], Y[:, k], n_bins)
    out["log_loss"] = float(-(Y * np.log(np.maximum(P, LOG_FLOOR))).sum() / len(P))
    return out


def evaluate(p: IntentModelParams, data: Dataset, n_bins=10):
    """AUC, calibration ratio and reliability table per intent, plus mean log loss."""
    return evaluate_predictions(predict_proba(p, data.X), data.Y, data.intents, n_bins)


def feature_correlations(X, predictions, feature_names):
    """Pearson r of every feature with ``predictions``, sorted by ``|r|``.

    Constant features get ``None`` and sort last.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(predictions, dtype=np.float64)
    if len(y) < 3:
        raise ValueError("need at least three examples")
    yc = y - y.mean()
    rows = []
    for name, col in zip(feature_names, X.T):
        xc = col - col.mean()
        denom = np.sqrt((xc ** 2).sum() * (yc ** 2).sum())
        rows.append((name, float((xc * yc).sum() / denom) if denom > 0 else None))
    return sorted(rows, key=lambda r: (r[1] is None, -abs(r[1] or 0.0)))


def read_dataset(path, intents=None, feature_names=None):
    """Load ``{"x": {name: value}, "y": {intent: 0/1}}`` lines."""
    from .io import DataError, read_records

    xs, ys = [], []
    for lineno, rec in read_records(path):
        if "x" not in rec or "y" not in rec:
            raise DataError("dataset record needs 'x' and 'y'", lineno)
        if feature_names is None:
            feature_names = tuple(rec["x"])
        if intents is None:
            intents = tuple(rec["y"])
        try:
            xs.append([float(rec["x"][f]) for f in feature_names])
            ys.append([float(rec["y"].get(v, 0)) for v in intents])
        except KeyError as exc:
            raise DataError(f"missing feature {exc}", lineno) from None
        except (TypeError, ValueError) as exc:
            raise DataError(str(exc), lineno) from None
        if set(rec["y"]) - set(intents):
            raise DataError(f"unknown intents {sorted(set(rec['y']) - set(intents))}", lineno)
        if max(ys[-1]) != 1:
            raise DataError("example has no active intent label", lineno)
    if not xs:
        raise DataError("dataset is empty")
    try:
        return Dataset(np.array(xs), np.array(ys), tuple(feature_names), tuple(intents))
    except ValueError as exc:
        raise DataError(str(exc)) from None


def dataset_records(data: Dataset):
    for x, y in zip(data.X, data.Y):
        yield {"x": dict(zip(data.feature_names, x.tolist())),
               "y": {v: int(t) for v, t in zip(data.intents, y)}}
