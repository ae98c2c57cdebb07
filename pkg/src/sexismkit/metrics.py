"""Confusion matrices and per-class / averaged classification reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, UnknownLabel


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = gold class, columns = predicted class."""

    counts: np.ndarray
    classes: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        K = len(self.classes)
        if K < 2:
            raise ValueError("a confusion matrix needs at least 2 classes")
        if counts.shape != (K, K) or np.any(counts < 0):
            raise ValueError(f"counts must be a non-negative {K}x{K} matrix")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["gold\\pred", *self.classes])
            for c, row in zip(self.classes, self.counts):
                writer.writerow([c, *row.tolist()])


def confusion(golds: Sequence, preds: Sequence, classes: Sequence[str]) -> ConfusionMatrix:
    if len(golds) != len(preds):
        raise LengthMismatch(f"{len(golds)} gold labels vs {len(preds)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for g, p in zip(golds, preds):
        if g not in index or p not in index:
            raise UnknownLabel(f"label {g if g not in index else p!r} not in class list")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(counts, tuple(classes))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class Report:
    classes: tuple[str, ...]
    per_class: tuple[ClassMetrics, ...]
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics
    # (class, metric) pairs where a zero denominator forced the value to 0
    zero_division: tuple[tuple[str, str], ...] = ()

    def __getitem__(self, cls: str) -> ClassMetrics:
        return self.per_class[self.classes.index(cls)]

    def to_dict(self) -> dict:
        def row(m):
            return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
        return {
            "classes": {c: row(m) for c, m in zip(self.classes, self.per_class)},
            "accuracy": self.accuracy,
            "macro avg": row(self.macro),
            "weighted avg": row(self.weighted),
            "zero_division": [list(z) for z in self.zero_division],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self, digits: int = 2) -> str:
        """Aligned text table: per-class rows, then accuracy, macro and weighted averages."""
        width = max(12, *(len(c) for c in self.classes))
        head = f"{'':>{width}} {'precision':>9} {'recall':>9} {'f1-score':>9} {'support':>9}"
        lines = [head, ""]
        fmt = f"{{:>{width}}} {{:>9.{digits}f}} {{:>9.{digits}f}} {{:>9.{digits}f}} {{:>9}}"
        for c, m in zip(self.classes, self.per_class):
            lines.append(fmt.format(c, m.precision, m.recall, m.f1, m.support))
        lines.append("")
        total = self.macro.support
        lines.append(f"{'accuracy':>{width}} {'':>9} {'':>9} {self.accuracy:>9.{digits}f} {total:>9}")
        lines.append(fmt.format("macro avg", self.macro.precision, self.macro.recall, self.macro.f1, total))
        lines.append(fmt.format("weighted avg", self.weighted.precision, self.weighted.recall,
                                self.weighted.f1, total))
        return "\n".join(lines)


def _per_class(cm: ConfusionMatrix):
    counts = cm.counts
    out, flags = [], []
    for k, c in enumerate(cm.classes):
        tp = int(counts[k, k])
        pred = int(counts[:, k].sum())
        true = int(counts[k, :].sum())
        if pred > 0:
            p = tp / pred
        else:
            p = 0.0
            flags.append((c, "precision"))
        if true > 0:
            r = tp / true
        else:
            r = 0.0
            flags.append((c, "recall"))
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        out.append(ClassMetrics(p, r, f, true))
    return out, flags


def _mean(values, weights=None) -> float:
    # sequential sums keep results bit-identical to the subset-search kernels
    total = 0.0
    if weights is None:
        for v in values:
            total += v
        return total / len(values)
    wsum = 0
    for v, w in zip(values, weights):
        total += v * w
        wsum += w
    return total / wsum


def report(cm: ConfusionMatrix) -> Report:
    if cm.total == 0:
        raise EmptyMatrix("no samples in confusion matrix")
    per, flags = _per_class(cm)
    support = [m.support for m in per]
    macro = ClassMetrics(_mean([m.precision for m in per]), _mean([m.recall for m in per]),
                         _mean([m.f1 for m in per]), cm.total)
    weighted = ClassMetrics(_mean([m.precision for m in per], support), _mean([m.recall for m in per], support),
                            _mean([m.f1 for m in per], support), cm.total)
    accuracy = int(np.trace(cm.counts)) / cm.total
    return Report(cm.classes, tuple(per), accuracy, macro, weighted, tuple(flags))


def macro_f1(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("no samples in confusion matrix")
    per, _ = _per_class(cm)
    return _mean([m.f1 for m in per])
