"""Similarity-based minority-class augmentation from an external pool.

Each pool document is scored by its mean cosine similarity to the anchor
documents of the target class (the mean of pairwise similarities, not the
similarity to the anchors' mean vector). Documents that clear the threshold,
and optionally belong to an admitted pool class, are relabeled as the
target class and appended to the base dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import Dataset
from .errors import ConfigError, DimensionMismatch, UnknownClass, ZeroNorm
from .features import EmbeddingTable, fit_tfidf
from .textnorm import NormConfig, normalize

DEFAULT_THRESHOLD = 0.45


@dataclass(frozen=True)
class AugmentPlan:
    task: str
    target: str
    anchors: tuple[str, ...]
    pool: Dataset
    threshold: float = DEFAULT_THRESHOLD
    source_class_filter: tuple[str, ...] | None = None
    filter_task: str | None = None
    max_selected: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        if self.source_class_filter is not None:
            object.__setattr__(self, "source_class_filter", tuple(self.source_class_filter))
        if not self.anchors:
            raise ConfigError("augmentation needs at least one anchor document")
        if not -1.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [-1, 1]")
        if self.max_selected is not None and self.max_selected < 0:
            raise ConfigError("max_selected must be non-negative")

    @classmethod
    def for_class(cls, base: Dataset, task: str, target: str, pool: Dataset, **kwargs) -> "AugmentPlan":
        """Plan whose anchors are every ``base`` document labeled ``target``."""
        anchors = [d.id for d in base if d.labels.get(task) == target]
        return cls(task=task, target=target, anchors=tuple(anchors), pool=pool, **kwargs)


@dataclass
class Selection:
    """Scores for every pool document and which ones were admitted."""

    ids: list[str]
    scores: list[float]
    status: list[str]
    selected: list[str] = field(default_factory=list)

    def write_report(self, path) -> None:
        order = sorted(range(len(self.ids)), key=lambda i: (-self.scores[i], self.ids[i]))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "score", "status"])
            for i in order:
                writer.writerow([self.ids[i], repr(self.scores[i]), self.status[i]])


def tfidf_embeddings(plan: AugmentPlan, anchor_source: Dataset, min_df: int = 1,
                     normalized: bool = True, norm: NormConfig | None = None) -> EmbeddingTable:
    """Fallback vectors when no precomputed embeddings are supplied.

    One TF-IDF model is fitted on the anchor texts plus the pool texts and
    every document is embedded with it. Texts are passed through ``normalize``
    first unless ``normalized`` is False (idempotent on already clean text).
    """
    wanted = set(plan.anchors)
    anchor_docs = [d for d in anchor_source if d.id in wanted]
    ids = [d.id for d in anchor_docs] + plan.pool.ids
    texts = [d.text for d in anchor_docs] + plan.pool.texts
    if normalized:
        texts = [normalize(t, norm) for t in texts]
    return EmbeddingTable.from_tfidf(fit_tfidf(texts, min_df=min_df), ids, texts)


def mean_similarity(candidate, anchors: Sequence) -> float:
    if len(anchors) == 0:
        raise ValueError("anchors must be non-empty")
    cand = np.asarray(candidate, dtype=np.float64)[None, :]
    anc = np.vstack([np.asarray(a, dtype=np.float64) for a in anchors])
    if anc.shape[1] != cand.shape[1]:
        raise DimensionMismatch(f"candidate dimension {cand.shape[1]} vs anchor dimension {anc.shape[1]}")
    if not np.any(cand) or not np.all(np.any(anc, axis=1)):
        raise ZeroNorm("zero vector in similarity computation")
    return float(kernels.mean_cosine(cand, anc)[0])


def score_pool(plan: AugmentPlan, embeddings: EmbeddingTable) -> Selection:
    anchors = embeddings.matrix(list(plan.anchors))
    pool_ids = plan.pool.ids
    cands = embeddings.matrix(pool_ids)
    scores = kernels.mean_cosine(cands, anchors) if pool_ids else np.zeros(0)
    scores = [float(s) for s in scores]
    status = ["below-threshold" if s < plan.threshold else "admitted" for s in scores]
    if plan.source_class_filter is not None:
        ftask = plan.filter_task or plan.task
        allowed = set(plan.source_class_filter)
        for i, doc in enumerate(plan.pool):
            if status[i] == "admitted" and doc.labels.get(ftask) not in allowed:
                status[i] = "class-filtered"
    admitted = sorted((i for i, s in enumerate(status) if s == "admitted"),
                      key=lambda i: (-scores[i], pool_ids[i]))
    if plan.max_selected is not None:
        for i in admitted[plan.max_selected:]:
            status[i] = "over-cap"
        admitted = admitted[: plan.max_selected]
    return Selection(pool_ids, scores, status, [pool_ids[i] for i in admitted])


def select_candidates(plan: AugmentPlan, embeddings: EmbeddingTable) -> list[str]:
    """Admitted pool ids, highest mean similarity first (ties by id)."""
    return score_pool(plan, embeddings).selected


def apply_augmentation(base: Dataset, plan: AugmentPlan, embeddings: EmbeddingTable,
                       name: str | None = None, selection: Selection | None = None) -> Dataset:
    """Append the selected pool documents relabeled as ``plan.target``.

    Relabeled documents carry the target label plus the coarser labels it
    implies in the base hierarchy; their pool labels are dropped because the
    pool may use a different taxonomy.
    """
    if plan.target not in base.hierarchy.classes(plan.task):
        raise UnknownClass(f"target {plan.target!r} is not a task {plan.task} class")
    if selection is None:
        selection = score_pool(plan, embeddings)
    by_id = {d.id: d for d in plan.pool}
    labels = {**base.hierarchy.ancestors(plan.task, plan.target), plan.task: plan.target}
    added = [by_id[i].replace(labels=dict(labels)) for i in selection.selected]
    return base.with_documents([*base.documents, *added], name or f"{base.name}+aug")
