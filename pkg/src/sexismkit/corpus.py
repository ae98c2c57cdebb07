"""Labeled text datasets: loading, merging, balancing, splitting, statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._hashing import fingerprint
from .errors import (
    CannotBalance,
    ConfigError,
    DataError,
    DegenerateClass,
    DuplicateId,
    EmptyTask,
    HierarchyMismatch,
    MissingColumn,
    NoPositives,
    UnknownClass,
)

TASKS = ("A", "B", "C")
NON_SEXIST = "non-sexist"
SEXIST = "sexist"


@dataclass(frozen=True)
class LabelHierarchy:
    """Binary task A, category task B, fine task C with a C -> B parent map."""

    task_b: tuple[str, ...]
    task_c: tuple[str, ...] = ()
    parents: Mapping[str, str] = field(default_factory=dict)
    task_a: tuple[str, ...] = (NON_SEXIST, SEXIST)

    def __post_init__(self):
        object.__setattr__(self, "task_b", tuple(self.task_b))
        object.__setattr__(self, "task_c", tuple(self.task_c))
        object.__setattr__(self, "parents", dict(self.parents))
        if self.task_a != (NON_SEXIST, SEXIST):
            raise ConfigError(f"task A classes must be ({NON_SEXIST!r}, {SEXIST!r})")
        for name, values in (("task_b", self.task_b), ("task_c", self.task_c)):
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate class names in {name}")
        if not self.task_c:
            return
        missing = [c for c in self.task_c if c not in self.parents]
        if missing:
            raise ConfigError(f"task C classes without parent: {missing}")
        bad = {p for p in self.parents.values() if p not in self.task_b}
        if bad:
            raise ConfigError(f"parent classes not in task B: {sorted(bad)}")
        orphans = [b for b in self.task_b if b not in set(self.parents.values())]
        if orphans:
            raise ConfigError(f"task B classes without children: {orphans}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "LabelHierarchy":
        try:
            task_b = list(obj["task_b"])
            fine = list(obj.get("task_c", []))
            task_c = [f["name"] for f in fine]
            parents = {f["name"]: f["parent"] for f in fine}
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed hierarchy document: {exc}") from exc
        return cls(task_b=task_b, task_c=task_c, parents=parents)

    @classmethod
    def from_json(cls, path) -> "LabelHierarchy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def canonical(cls) -> "LabelHierarchy":
        """The 2 / 4 / 11 class taxonomy of the shared task."""
        text = resources.files("sexismkit").joinpath("data/canonical_hierarchy.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "task_b": list(self.task_b),
            "task_c": [{"name": c, "parent": self.parents[c]} for c in self.task_c],
        }

    def classes(self, task: str) -> tuple[str, ...]:
        if task == "A":
            return self.task_a
        if task == "B":
            return self.task_b
        if task == "C":
            return self.task_c
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")

    def children(self, category: str) -> tuple[str, ...]:
        if category not in self.task_b:
            raise UnknownClass(f"{category!r} is not a task B class")
        return tuple(c for c in self.task_c if self.parents[c] == category)

    def parent(self, fine: str) -> str:
        return self.parents[fine]

    def ancestors(self, task: str, label: str) -> dict[str, str]:
        """Labels implied for coarser tasks by ``label`` on ``task``."""
        if task == "C":
            return {"A": SEXIST, "B": self.parents[label]}
        if task == "B":
            return {"A": SEXIST}
        return {}

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source: str = ""
    labels: Mapping[str, str] = field(default_factory=dict)

    def label(self, task: str) -> str | None:
        return self.labels.get(task)

    def replace(self, **changes) -> "Document":
        fields = {"id": self.id, "text": self.text, "source": self.source, "labels": dict(self.labels)}
        fields.update(changes)
        return Document(**fields)

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "source": self.source, "labels": dict(sorted(self.labels.items()))}


class Dataset:
    """An immutable, ordered collection of documents sharing one hierarchy."""

    def __init__(self, documents: Iterable[Document], hierarchy: LabelHierarchy, name: str = "dataset"):
        self.documents = tuple(documents)
        self.hierarchy = hierarchy
        self.name = name
        seen = set()
        for doc in self.documents:
            if not doc.id:
                raise DataError(f"{name}: empty document id")
            if doc.id in seen:
                raise DuplicateId(f"{name}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            for task, label in doc.labels.items():
                if label not in hierarchy.classes(task):
                    raise UnknownClass(f"{name}: document {doc.id!r} has unknown task {task} class {label!r}")
        self._fingerprint = None

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, i):
        return self.documents[i]

    def __repr__(self):
        return f"Dataset(name={self.name!r}, n={len(self)})"

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    @property
    def texts(self) -> list[str]:
        return [d.text for d in self.documents]

    def labels(self, task: str) -> list[str | None]:
        return [d.labels.get(task) for d in self.documents]

    def with_documents(self, documents: Iterable[Document], name: str | None = None) -> "Dataset":
        return Dataset(documents, self.hierarchy, name or self.name)

    def labeled(self, task: str) -> "Dataset":
        return self.with_documents((d for d in self.documents if task in d.labels), self.name)

    def where(self, task: str, label: str, name: str | None = None) -> "Dataset":
        """Documents whose ``task`` label equals ``label``."""
        return self.with_documents((d for d in self.documents if d.labels.get(task) == label), name)

    def map_text(self, fn, name: str | None = None) -> "Dataset":
        return self.with_documents((d.replace(text=fn(d)) for d in self.documents), name)

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = fingerprint(
                {"hierarchy": self.hierarchy.to_dict(), "documents": [d.to_dict() for d in self.documents]}
            )
        return self._fingerprint

    def to_csv(self, path, tasks: Sequence[str] = TASKS) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "text", "source", *[f"label_{t}" for t in tasks]])
            for d in self.documents:
                writer.writerow([d.id, d.text, d.source, *[d.labels.get(t, "") for t in tasks]])


DEFAULT_COLUMNS = {"id": "id", "text": "text", "source": "source", "A": "label_A", "B": "label_B", "C": "label_C"}


def load_csv(
    path,
    columns: Mapping[str, str | None] | None = None,
    hierarchy: LabelHierarchy | None = None,
    name: str | None = None,
    source: str = "",
    na_values: Sequence[str] = ("",),
) -> Dataset:
    """Read one document per CSV row.

    ``columns`` maps the logical fields ``id``, ``text``, ``source`` and the
    task ids ``A``/``B``/``C`` to header names. Fields mapped to ``None`` or
    absent from the map are not read. Without a map, ``id``/``text`` columns
    are required and ``label_A``/``label_B``/``label_C`` are read when
    present. When ``source`` is not a column the ``source`` argument tags
    every row. Label cells whose value is in
    ``na_values`` leave the document unlabeled for that task.
    """
    hierarchy = hierarchy or LabelHierarchy.canonical()
    path = Path(path)
    implicit = columns is None
    columns = {k: v for k, v in (DEFAULT_COLUMNS if implicit else columns).items() if v}
    if "text" not in columns:
        raise MissingColumn("column map must name a text column")
    na = set(na_values)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if implicit:
            # the default map only reads the label columns that are present
            columns = {k: v for k, v in columns.items() if k not in TASKS or v in header}
        required = [c for k, c in columns.items() if k in ("id", "text") or k in TASKS]
        absent = [c for c in required if c not in header]
        if absent:
            raise MissingColumn(f"{path}: header lacks column(s) {absent}")
        source_col = columns.get("source") if columns.get("source") in header else None
        documents = []
        seen = {}
        for rowno, row in enumerate(reader, start=1):
            doc_id = row[columns["id"]] if "id" in columns else str(rowno)
            if doc_id in seen:
                raise DuplicateId(f"{path}: row {rowno} repeats id {doc_id!r} (first seen in row {seen[doc_id]})")
            seen[doc_id] = rowno
            labels = {}
            for task in TASKS:
                col = columns.get(task)
                if col is None:
                    continue
                value = row[col]
                if value is None or value in na:
                    continue
                if value not in hierarchy.classes(task):
                    raise UnknownClass(f"{path}: row {rowno}: unknown task {task} class {value!r}")
                labels[task] = value
            documents.append(
                Document(
                    id=doc_id,
                    text=row[columns["text"]] or "",
                    source=row[source_col] if source_col else source,
                    labels=labels,
                )
            )
    return Dataset(documents, hierarchy, name or path.stem)


def merge(parts: Sequence[Dataset], name: str | None = None) -> Dataset:
    """Concatenate datasets in order, prefixing ids with the part name."""
    if not parts:
        raise DataError("merge needs at least one dataset")
    hierarchy = parts[0].hierarchy
    for p in parts[1:]:
        if p.hierarchy != hierarchy:
            raise HierarchyMismatch(f"cannot merge {p.name!r}: label hierarchy differs from {parts[0].name!r}")
    docs = [d.replace(id=f"{p.name}/{d.id}") for p in parts for d in p.documents]
    return Dataset(docs, hierarchy, name or "+".join(p.name for p in parts))


def _require_binary(d: Dataset, task: str) -> tuple[str, ...]:
    classes = d.hierarchy.classes(task)
    if len(classes) != 2:
        raise DataError(f"task {task} is not binary ({len(classes)} classes)")
    return classes


def balance_binary(d: Dataset, task: str, protected_source: str | None = None, seed: int = 0,
                   name: str | None = None) -> Dataset:
    """Drop random majority-class rows until both classes are equally large.

    Rows whose source equals ``protected_source`` are never dropped.
    """
    classes = _require_binary(d, task)
    labels = d.labels(task)
    counts = {c: sum(1 for y in labels if y == c) for c in classes}
    minority, majority = sorted(classes, key=lambda c: (counts[c], classes.index(c)))
    excess = counts[majority] - counts[minority]
    if excess == 0:
        return d
    removable = [i for i, doc in enumerate(d.documents)
                 if labels[i] == majority and doc.source != protected_source]
    if len(removable) < excess:
        protected = counts[majority] - len(removable)
        raise CannotBalance(
            f"{d.name}: {protected} protected {majority!r} rows exceed the balanced size {counts[minority]}"
        )
    rng = np.random.default_rng(seed)
    dropped = set(rng.choice(np.asarray(removable), size=excess, replace=False).tolist())
    keep = (doc for i, doc in enumerate(d.documents) if i not in dropped)
    return d.with_documents(keep, name or f"{d.name}.balanced")


def _largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    base = [math.floor(q) for q in quotas]
    remaining = total - sum(base)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - base[i]), i))
    for k in range(remaining):
        base[order[k % len(order)]] += 1
    return base


def stratified_split(d: Dataset, task: str, holdout_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    labels = d.labels(task)
    if any(y is None for y in labels):
        raise DataError(f"{d.name}: every document must be labeled for task {task} before splitting")
    classes = [c for c in d.hierarchy.classes(task) if c in set(labels)]
    members = {c: [i for i, y in enumerate(labels) if y == c] for c in classes}
    small = [c for c in classes if len(members[c]) < 2]
    if small:
        raise DegenerateClass(f"{d.name}: classes with fewer than 2 documents: {small}")
    total = math.floor(holdout_fraction * len(d) + 0.5)
    sizes = _largest_remainder([holdout_fraction * len(members[c]) for c in classes], total)
    rng = np.random.default_rng(seed)
    holdout = set()
    for c, k in zip(classes, sizes):
        picked = rng.permutation(len(members[c]))[:k]
        holdout.update(members[c][j] for j in picked)
    train = [doc for i, doc in enumerate(d.documents) if i not in holdout]
    held = [doc for i, doc in enumerate(d.documents) if i in holdout]
    return d.with_documents(train, f"{d.name}.train"), d.with_documents(held, f"{d.name}.holdout")


@dataclass(frozen=True)
class ClassDistribution:
    task: str
    classes: tuple[str, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple(c / self.total for c in self.counts)

    def count(self, label: str) -> int:
        return self.counts[self.classes.index(label)]

    def fraction(self, label: str) -> float:
        return self.count(label) / self.total

    def __add__(self, other: "ClassDistribution") -> "ClassDistribution":
        if (self.task, self.classes) != (other.task, other.classes):
            raise HierarchyMismatch("distributions over different class lists")
        return ClassDistribution(self.task, self.classes, tuple(a + b for a, b in zip(self.counts, other.counts)))

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "total": self.total,
            "classes": [
                {"class": c, "count": n, "fraction": f}
                for c, n, f in zip(self.classes, self.counts, self.fractions)
            ],
        }


def class_stats(d: Dataset, task: str) -> ClassDistribution:
    classes = d.hierarchy.classes(task)
    labels = [y for y in d.labels(task) if y is not None]
    if not labels:
        raise EmptyTask(f"{d.name}: no documents labeled for task {task}")
    return ClassDistribution(task, classes, tuple(labels.count(c) for c in classes))


def imbalance_weight(d: Dataset, task: str, positive_class: str = SEXIST) -> float:
    """Positive-class weight ``total / positives`` for the weighted binary loss."""
    _require_binary(d, task)
    stats = class_stats(d, task)
    positives = stats.count(positive_class)
    if positives == 0:
        raise NoPositives(f"{d.name}: no {positive_class!r} documents for task {task}")
    return stats.total / positives
