"""Voting ensembles, exhaustive subset search and two-stage hierarchical prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import Dataset, LabelHierarchy
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    TaskMismatch,
    TooManyCandidates,
    UnknownModel,
    WeightCountMismatch,
)

MAX_SEARCH_MEMBERS = 16
STRATEGIES = ("soft", "hard")


def soft_vote(probs: Sequence, weights: Sequence[float] | None = None) -> np.ndarray:
    """Mean of member probability vectors (weighted mean when ``weights`` given)."""
    if len(probs) == 0:
        raise ValueError("soft_vote needs at least one member")
    rows = [np.asarray(p, dtype=np.float64) for p in probs]
    if any(r.shape != rows[0].shape for r in rows):
        raise DimensionMismatch("member probability vectors differ in length")
    if weights is None:
        acc = rows[0].copy()
        for r in rows[1:]:
            acc += r
        return acc / len(rows)
    if len(weights) != len(rows):
        raise WeightCountMismatch(f"{len(weights)} weights for {len(rows)} members")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    acc = np.zeros_like(rows[0])
    for w, r in zip(weights, rows):
        acc += w * r
    return acc / acc.sum()


def hard_vote(probs: Sequence) -> int:
    """Majority of member argmaxes; a top-vote tie goes to the best soft mean among the tied classes."""
    mean = soft_vote(probs)
    votes = np.zeros(len(mean), dtype=np.int64)
    for p in probs:
        votes[int(np.argmax(p))] += 1
    tied = np.flatnonzero(votes == votes.max())
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[np.argmax(mean[tied])])


def _check_strategy(strategy: str) -> None:
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown voting strategy {strategy!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple[str, ...]
    strategy: str = "soft"
    weights: tuple[float, ...] | None = None
    task: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(self.weights))
        if not self.members:
            raise ConfigError("an ensemble needs at least one member")
        if len(set(self.members)) != len(self.members):
            raise ConfigError(f"duplicate ensemble members: {self.members}")
        _check_strategy(self.strategy)
        if self.weights is not None:
            if len(self.weights) != len(self.members):
                raise WeightCountMismatch(f"{len(self.weights)} weights for {len(self.members)} members")
            if any(w <= 0 for w in self.weights):
                raise ConfigError("ensemble weights must be positive")

    def to_dict(self) -> dict:
        out = {"members": list(self.members), "strategy": self.strategy}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.task is not None:
            out["task"] = self.task
        return out


class PredictionCache:
    """Member probability matrices keyed by (model fingerprint, dataset fingerprint)."""

    def __init__(self):
        self._store: dict[tuple[str, str], np.ndarray] = {}
        self.misses = 0

    def get(self, model, texts: Sequence[str], key: str) -> np.ndarray:
        k = (model.fingerprint, key)
        if k not in self._store:
            self.misses += 1
            self._store[k] = model.predict_proba_many(list(texts))
        return self._store[k]


def _resolve(registry: Mapping, ids: Sequence[str]):
    missing = [m for m in ids if m not in registry]
    if missing:
        raise UnknownModel(f"unknown model id(s): {missing}")
    return [registry[m] for m in ids]


def _aligned(model, probs: np.ndarray, classes: tuple[str, ...]) -> np.ndarray:
    """Member probabilities restricted to ``classes``, renormalized if any mass was dropped."""
    if tuple(model.classes) == classes:
        return probs
    try:
        cols = [model.classes.index(c) for c in classes]
    except ValueError:
        raise TaskMismatch(f"model classes {model.classes} do not cover {classes}") from None
    sub = probs[:, cols]
    total = sub.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, sub / total, 1.0 / len(classes))
    return out


def _member_stack(spec: EnsembleSpec, registry: Mapping, texts: Sequence[str], classes=None,
                  cache: PredictionCache | None = None, cache_key: str | None = None):
    models = _resolve(registry, spec.members)
    tasks = {m.task for m in models}
    if len(tasks) > 1 or (spec.task is not None and tasks != {spec.task}):
        raise TaskMismatch(f"ensemble members span tasks {sorted(tasks)}"
                           + (f", expected {spec.task}" if spec.task else ""))
    if classes is None:
        classes = tuple(models[0].classes)
        if any(tuple(m.classes) != classes for m in models):
            raise TaskMismatch("ensemble members predict different class lists")
    stack = []
    for m in models:
        probs = cache.get(m, texts, cache_key) if cache is not None and cache_key else m.predict_proba_many(list(texts))
        stack.append(_aligned(m, probs, classes))
    return classes, np.stack(stack)


def _combine(stack: np.ndarray, strategy: str, weights=None):
    labels, vectors = [], []
    for n in range(stack.shape[1]):
        rows = list(stack[:, n, :])
        mean = soft_vote(rows, weights)
        vectors.append(mean)
        labels.append(int(np.argmax(mean)) if strategy == "soft" else hard_vote(rows))
    return labels, np.array(vectors).reshape(stack.shape[1], stack.shape[2])


def predict_ensemble_many(spec: EnsembleSpec, registry: Mapping, texts: Sequence[str], classes=None,
                          cache: PredictionCache | None = None, cache_key: str | None = None):
    """Labels and combined probability vectors for many texts.

    The hard strategy returns the unweighted soft mean as its diagnostic vector.
    """
    classes, stack = _member_stack(spec, registry, texts, classes, cache, cache_key)
    weights = spec.weights if spec.strategy == "soft" else None
    idx, vectors = _combine(stack, spec.strategy, weights)
    return [classes[i] for i in idx], vectors


def predict_ensemble(spec: EnsembleSpec, registry: Mapping, text: str):
    labels, vectors = predict_ensemble_many(spec, registry, [text])
    return labels[0], vectors[0]


@dataclass(frozen=True)
class SubsetResult:
    size: int
    members: tuple[str, ...]
    score: float


def _best_per_size(ids: Sequence[str], masks: np.ndarray, scores: np.ndarray) -> list[SubsetResult]:
    best: dict[int, SubsetResult] = {}
    for mask, score in zip(masks.tolist(), scores.tolist()):
        members = tuple(ids[j] for j in range(len(ids)) if (mask >> j) & 1)
        k = len(members)
        cur = best.get(k)
        if cur is None or score > cur.score or (score == cur.score and members < cur.members):
            best[k] = SubsetResult(k, members, score)
    return [best[k] for k in sorted(best)]


def all_masks(m: int) -> np.ndarray:
    return np.arange(1, 1 << m, dtype=np.int64)


def search_subsets_matrix(probs: np.ndarray, gold: Sequence[int], ids: Sequence[str], strategy: str = "soft",
                          return_all: bool = False, backend: str | None = None):
    """Best validation macro-F1 subset of every size from a prediction stack.

    ``probs`` has shape (members, samples, classes) and rows ordered like
    ``ids``. Members are re-ordered by id first so results do not depend on
    the order candidates are listed in. Equal scores go to the
    lexicographically smallest member tuple.
    """
    _check_strategy(strategy)
    ids = list(ids)
    if len(ids) > MAX_SEARCH_MEMBERS:
        raise TooManyCandidates(f"{len(ids)} candidates exceed the exhaustive-search limit {MAX_SEARCH_MEMBERS}")
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate candidate ids")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != len(ids):
        raise DimensionMismatch(f"{probs.shape[0]} prediction rows for {len(ids)} candidates")
    order = sorted(range(len(ids)), key=lambda j: ids[j])
    ids = [ids[j] for j in order]
    probs = probs[order]
    masks = all_masks(len(ids))
    scores = kernels.score_subsets(probs, np.asarray(gold), masks, hard=(strategy == "hard"), backend=backend)
    best = _best_per_size(ids, masks, scores)
    if not return_all:
        return best
    every = [SubsetResult(bin(m).count("1"), tuple(ids[j] for j in range(len(ids)) if (m >> j) & 1), s)
             for m, s in zip(masks.tolist(), scores.tolist())]
    return best, every


def search_subsets(candidates: Sequence[str], strategy: str, validation: Dataset, registry: Mapping,
                   task: str | None = None, cache: PredictionCache | None = None, return_all: bool = False):
    """Exhaustive best-ensemble-per-size search on a labeled validation set."""
    if len(candidates) > MAX_SEARCH_MEMBERS:
        raise TooManyCandidates(f"{len(candidates)} candidates exceed the exhaustive-search limit {MAX_SEARCH_MEMBERS}")
    spec = EnsembleSpec(tuple(candidates), strategy, task=task)
    cache = cache if cache is not None else PredictionCache()
    if task is None:
        task = _resolve(registry, candidates[:1])[0].task
    classes, stack = _member_stack(spec, registry, validation.texts, cache=cache, cache_key=validation.fingerprint)
    golds = validation.labels(task)
    if any(g is None for g in golds):
        raise DataError(f"{validation.name}: validation documents must be labeled for task {task}")
    gold = np.array([classes.index(g) for g in golds], dtype=np.int64)
    return search_subsets_matrix(stack, gold, list(candidates), strategy, return_all)


@dataclass(frozen=True)
class HierarchicalSpec:
    """Category-stage ensemble plus one fine-stage ensemble per category."""

    category: EnsembleSpec
    fine: Mapping[str, EnsembleSpec]
    hierarchy: LabelHierarchy = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fine", dict(self.fine))
        missing = [c for c in self.hierarchy.task_b if c not in self.fine]
        if missing:
            raise ConfigError(f"no fine-stage ensemble for categories {missing}")
        extra = [c for c in self.fine if c not in self.hierarchy.task_b]
        if extra:
            raise ConfigError(f"fine-stage ensembles for unknown categories {extra}")


def predict_hierarchical_many(spec: HierarchicalSpec, registry: Mapping, texts: Sequence[str],
                              cache: PredictionCache | None = None, cache_key: str | None = None):
    """(category, fine) pairs; the fine label is always a child of the category."""
    h = spec.hierarchy
    categories, _ = predict_ensemble_many(spec.category, registry, texts, classes=h.task_b,
                                          cache=cache, cache_key=cache_key)
    fine = [None] * len(texts)
    for cat in h.task_b:
        idx = [i for i, c in enumerate(categories) if c == cat]
        if not idx:
            continue
        labels, _ = predict_ensemble_many(spec.fine[cat], registry, [texts[i] for i in idx],
                                          classes=h.children(cat))
        for i, lab in zip(idx, labels):
            fine[i] = lab
    return list(zip(categories, fine))


def predict_hierarchical(spec: HierarchicalSpec, registry: Mapping, text: str) -> tuple[str, str]:
    return predict_hierarchical_many(spec, registry, [text])[0]
