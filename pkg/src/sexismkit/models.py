"""Linear and naive Bayes classifiers over TF-IDF features.

Linear models are trained by mini-batch AdamW under one of three per-sample
losses: cross-entropy, positive-weighted binary cross-entropy, or focal loss
with ``p_t`` the probability of the gold class. Binary tasks use a single
sigmoid output whose probability vector is ``[1 - p, p]``; the second class
of the task is the positive one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ._hashing import fingerprint
from .corpus import Dataset
from .errors import ConfigError, DataError, ShapeMismatch, SpecTaskMismatch
from .features import TfidfModel

PROB_EPS = 1e-12
LOSS_KINDS = ("cross-entropy", "weighted-bce", "focal")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "cross-entropy"
    w: float = 1.0
    gamma: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        for name in ("w", "gamma", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"loss parameter {name} must be finite")
        if self.kind == "weighted-bce" and self.w <= 0:
            raise ConfigError("weighted-bce needs w > 0")
        if self.kind == "focal" and (self.gamma < 0 or self.alpha <= 0):
            raise ConfigError("focal loss needs gamma >= 0 and alpha > 0")

    @classmethod
    def cross_entropy(cls) -> "LossSpec":
        return cls("cross-entropy")

    @classmethod
    def weighted_bce(cls, w: float) -> "LossSpec":
        return cls("weighted-bce", w=w)

    @classmethod
    def focal(cls, gamma: float = 2.0, alpha: float = 1.0) -> "LossSpec":
        return cls("focal", gamma=gamma, alpha=alpha)

    def to_dict(self) -> dict:
        if self.kind == "weighted-bce":
            return {"kind": self.kind, "w": self.w}
        if self.kind == "focal":
            return {"kind": self.kind, "gamma": self.gamma, "alpha": self.alpha}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "LossSpec":
        return cls(**dict(obj))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def probs_from_logits(logits: np.ndarray) -> np.ndarray:
    """Rows of logits -> rows of probabilities (sigmoid pair for 1 logit)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if logits.shape[1] == 1:
        p = sigmoid(logits[:, 0])
        return np.column_stack([1.0 - p, p])
    return softmax(logits)


def batch_loss(spec: LossSpec, probs: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """Per-sample loss for rows of ``probs`` against gold class indices."""
    probs = np.atleast_2d(probs)
    gold = np.asarray(gold)
    rows = np.arange(len(gold))
    if spec.kind == "weighted-bce":
        if probs.shape[1] != 2:
            raise SpecTaskMismatch("weighted-bce applies to binary tasks only")
        y = (gold == 1).astype(np.float64)
        p_pos = np.clip(probs[:, 1], PROB_EPS, 1 - PROB_EPS)
        p_neg = np.clip(probs[:, 0], PROB_EPS, 1 - PROB_EPS)
        return -(spec.w * y * np.log(p_pos) + (1 - y) * np.log(p_neg))
    p_t = np.clip(probs[rows, gold], PROB_EPS, 1 - PROB_EPS)
    if spec.kind == "cross-entropy":
        return -np.log(p_t)
    return -spec.alpha * (1 - p_t) ** spec.gamma * np.log(p_t)


def batch_gradient(spec: LossSpec, logits: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """Analytic d loss / d logits for each row (unclamped probabilities)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    gold = np.asarray(gold)
    rows = np.arange(len(gold))
    if logits.shape[1] == 1:
        probs = probs_from_logits(logits)
        p = probs[:, 1]
        y = gold == 1
        if spec.kind == "cross-entropy":
            g = p - y
        elif spec.kind == "weighted-bce":
            g = np.where(y, -spec.w * probs[:, 0], p)
        else:
            p_t = np.where(y, p, probs[:, 0])
            q_t = np.where(y, probs[:, 0], p)
            sign = np.where(y, 1.0, -1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(p_t > 0, p_t * np.log(p_t), 0.0)
            g = -sign * spec.alpha * (q_t ** (spec.gamma + 1) - spec.gamma * q_t ** spec.gamma * lg)
        return g[:, None]
    if spec.kind == "weighted-bce":
        raise SpecTaskMismatch("weighted-bce applies to binary (single-logit) models only")
    probs = softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[rows, gold] = 1.0
    if spec.kind == "cross-entropy":
        return probs - onehot
    p = probs[rows, gold]
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(q > 0, spec.gamma * q ** (spec.gamma - 1) * p * np.log(p), 0.0)
    scale = q ** spec.gamma - corr
    return -spec.alpha * scale[:, None] * (onehot - probs)


def loss_value(spec: LossSpec, probs, gold: int) -> float:
    return float(batch_loss(spec, np.asarray(probs, dtype=np.float64)[None, :], np.array([gold]))[0])


def loss_gradient(spec: LossSpec, logits, gold: int) -> np.ndarray:
    return batch_gradient(spec, np.asarray(logits, dtype=np.float64)[None, :], np.array([gold]))[0]


@dataclass(frozen=True)
class OptimizerState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def fresh(cls, shape, **hyper) -> "OptimizerState":
        return cls(0, np.zeros(shape), np.zeros(shape), **hyper)


def adamw_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray):
    """One AdamW update with bias correction and decoupled weight decay."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch(f"params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * params)
    return replace(state, step=t, m=m, v=v), new


class _Classifier:
    task: str
    classes: tuple[str, ...]
    featurizer: TfidfModel
    family: str

    def scores(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def predict_proba_many(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, text: str) -> np.ndarray:
        return self.predict_proba_many([text])[0]

    def predict(self, text: str) -> str:
        return self.classes[int(np.argmax(self.predict_proba(text)))]

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def fingerprint(self) -> str:
        fp = getattr(self, "_fingerprint", None)
        if fp is None:
            fp = self._fingerprint = fingerprint(self.to_dict())
        return fp

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)


class LinearModel(_Classifier):
    family = "linear"

    def __init__(self, weights, bias, classes, task, featurizer: TfidfModel,
                 loss: LossSpec | None = None, meta: Mapping | None = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.classes = tuple(classes)
        self.task = task
        self.featurizer = featurizer
        self.loss = loss or LossSpec()
        self.meta = dict(meta or {})
        rows = 1 if len(self.classes) == 2 else len(self.classes)
        if self.weights.shape != (rows, featurizer.dim) or self.bias.shape != (rows,):
            raise ShapeMismatch(f"expected weights ({rows}, {featurizer.dim}), got {self.weights.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite model parameters")

    def logits(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba_many(self, texts):
        return probs_from_logits(self.logits(self.featurizer.transform_many(texts)))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "task": self.task,
            "classes": list(self.classes),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "loss": self.loss.to_dict(),
            "meta": self.meta,
            "featurizer": self.featurizer.to_dict(),
            "featurizer_fingerprint": self.featurizer.fingerprint,
        }


class NBModel(_Classifier):
    """Multinomial naive Bayes over raw token counts of the featurizer vocabulary."""

    family = "naive-bayes"

    def __init__(self, class_log_prior, feature_log_prob, classes, task, featurizer: TfidfModel,
                 smoothing: float = 1.0):
        self.class_log_prior = np.asarray(class_log_prior, dtype=np.float64)
        self.feature_log_prob = np.asarray(feature_log_prob, dtype=np.float64)
        self.classes = tuple(classes)
        self.task = task
        self.featurizer = featurizer
        self.smoothing = smoothing

    def joint_log_likelihood(self, X) -> np.ndarray:
        return np.asarray(X @ self.feature_log_prob.T) + self.class_log_prior

    def predict_proba_many(self, texts):
        jll = self.joint_log_likelihood(self.featurizer.count_matrix(texts))
        return softmax(jll)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "task": self.task,
            "classes": list(self.classes),
            "class_log_prior": [x if math.isfinite(x) else None for x in self.class_log_prior.tolist()],
            "feature_log_prob": self.feature_log_prob.tolist(),
            "smoothing": self.smoothing,
            "featurizer": self.featurizer.to_dict(),
            "featurizer_fingerprint": self.featurizer.fingerprint,
        }


def model_from_dict(obj: Mapping):
    featurizer = TfidfModel.from_dict(obj["featurizer"])
    if featurizer.fingerprint != obj.get("featurizer_fingerprint", featurizer.fingerprint):
        raise DataError("featurizer fingerprint does not match the stored vocabulary")
    if obj["family"] == "linear":
        return LinearModel(obj["weights"], obj["bias"], obj["classes"], obj["task"], featurizer,
                           LossSpec.from_dict(obj["loss"]), obj.get("meta"))
    if obj["family"] == "naive-bayes":
        prior = [-math.inf if x is None else x for x in obj["class_log_prior"]]
        return NBModel(prior, obj["feature_log_prob"], obj["classes"], obj["task"], featurizer,
                       obj.get("smoothing", 1.0))
    raise DataError(f"unknown model family {obj['family']!r}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def _training_arrays(train: Dataset, task: str, classes: Sequence[str] | None):
    classes = tuple(classes or train.hierarchy.classes(task))
    labels = train.labels(task)
    if any(y is None for y in labels):
        raise DataError(f"{train.name}: every training document must be labeled for task {task}")
    unknown = sorted({y for y in labels if y not in classes})
    if unknown:
        raise DataError(f"{train.name}: labels {unknown} are outside the model's classes")
    return classes, np.array([classes.index(y) for y in labels], dtype=np.int64)


def _mean_loss(spec, W, b, X, y) -> float:
    probs = probs_from_logits(np.asarray(X @ W.T) + b)
    return float(batch_loss(spec, probs, y).mean())


def train_linear(
    train: Dataset,
    featurizer: TfidfModel,
    task: str,
    loss: LossSpec | None = None,
    epochs: int = 10,
    batch: int = 8,
    lr: float = 1e-2,
    seed: int = 0,
    weight_decay: float = 0.0,
    classes: Sequence[str] | None = None,
    validation: Dataset | None = None,
    select_best: bool = False,
) -> LinearModel:
    """Mini-batch AdamW on the mean per-sample loss, reshuffled every epoch.

    With ``select_best`` and a ``validation`` set, the parameters of the
    epoch with the highest validation macro-F1 are returned instead of the
    final ones.
    """
    from .metrics import confusion, macro_f1

    loss = loss or LossSpec()
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if len(train) == 0:
        raise DataError("empty training set")
    classes, y = _training_arrays(train, task, classes)
    binary = len(classes) == 2
    if loss.kind == "weighted-bce" and not binary:
        raise SpecTaskMismatch(f"weighted-bce needs a binary task, task {task} has {len(classes)} classes")
    rows = 1 if binary else len(classes)
    X = featurizer.transform_many(train.texts)
    W = np.zeros((rows, featurizer.dim))
    b = np.zeros(rows)
    hyper = dict(lr=lr, beta1=0.9, beta2=0.999, eps=1e-8)
    sw = OptimizerState.fresh(W.shape, weight_decay=weight_decay, **hyper)
    sb = OptimizerState.fresh(b.shape, weight_decay=0.0, **hyper)
    rng = np.random.default_rng(seed)
    history = [_mean_loss(loss, W, b, X, y)]
    best = None
    if select_best and validation is not None:
        Xv = featurizer.transform_many(validation.texts)
        val_gold = validation.labels(task)
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            Xb = X[idx]
            G = batch_gradient(loss, np.asarray(Xb @ W.T) + b, y[idx]) / len(idx)
            gW = np.asarray(Xb.T @ G).T
            sw, W = adamw_step(sw, W, gW)
            sb, b = adamw_step(sb, b, G.sum(axis=0))
        history.append(_mean_loss(loss, W, b, X, y))
        if select_best and validation is not None:
            preds = [classes[i] for i in probs_from_logits(np.asarray(Xv @ W.T) + b).argmax(axis=1)]
            score = macro_f1(confusion(val_gold, preds, classes))
            if best is None or score > best[0]:
                best = (score, epoch + 1, W.copy(), b.copy())
    meta = {"epochs": epochs, "batch": batch, "lr": lr, "seed": seed, "weight_decay": weight_decay,
            "loss_history": history, "train_fingerprint": train.fingerprint}
    if best is not None:
        meta.update(best_epoch=best[1], best_validation_macro_f1=best[0])
        W, b = best[2], best[3]
    return LinearModel(W, b, classes, task, featurizer, loss, meta)


def train_nb(train: Dataset, featurizer: TfidfModel, task: str, smoothing: float = 1.0,
             classes: Sequence[str] | None = None) -> NBModel:
    if smoothing <= 0:
        raise ValueError("smoothing must be > 0")
    if len(train) == 0:
        raise DataError("empty training set")
    classes, y = _training_arrays(train, task, classes)
    counts = featurizer.count_matrix(train.texts)
    K, V = len(classes), featurizer.dim
    flp = np.empty((K, V))
    prior = np.full(K, -math.inf)
    for k in range(K):
        mask = y == k
        fc = np.asarray(counts[mask].sum(axis=0)).ravel() + smoothing
        flp[k] = np.log(fc) - math.log(fc.sum())
        if mask.any():
            prior[k] = math.log(mask.sum() / len(y))
    return NBModel(prior, flp, classes, task, featurizer, smoothing)
