"""TF-IDF featurization, dense embedding tables and cosine similarity."""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ._hashing import fingerprint
from .errors import (
    DimensionMismatch,
    DuplicateKey,
    EmptyVocabulary,
    MissingEmbedding,
    RaggedDimensions,
    ZeroNorm,
    ZeroNormVector,
)

# bracketed special tokens ([USER], [URL], ...) stay whole
_TOKEN = re.compile(r"\[[A-Z]+\]|\w+")


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    tokens = _TOKEN.findall(text)
    if lowercase:
        tokens = [t if t.startswith("[") else t.lower() for t in tokens]
    return tokens


@dataclass(frozen=True)
class SparseVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("non-finite value")

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.indices)] = self.values
        return out


class TfidfModel:
    """Vocabulary plus smoothed idf weights: ``idf(t) = ln((1+N)/(1+df)) + 1``."""

    def __init__(self, vocabulary: Mapping[str, int], idf: Sequence[float], lowercase: bool = True, min_df: int = 1):
        self.vocabulary = dict(vocabulary)
        self.idf = np.asarray(idf, dtype=np.float64)
        self.lowercase = lowercase
        self.min_df = min_df
        if sorted(self.vocabulary.values()) != list(range(len(self.vocabulary))):
            raise ValueError("vocabulary indices must be contiguous from 0")
        if len(self.idf) != len(self.vocabulary) or not np.all(np.isfinite(self.idf)) or np.any(self.idf <= 0):
            raise ValueError("idf must be finite, positive and match the vocabulary")
        self._fingerprint = None

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def tokens(self, text: str) -> list[str]:
        return tokenize(text, self.lowercase)

    def counts(self, text: str) -> dict[int, int]:
        counts = Counter(self.vocabulary[t] for t in self.tokens(text) if t in self.vocabulary)
        return dict(sorted(counts.items()))

    def transform(self, text: str) -> SparseVector:
        counts = self.counts(text)
        idx = tuple(counts)
        raw = [counts[i] * self.idf[i] for i in idx]
        norm = math.sqrt(sum(v * v for v in raw))
        vals = tuple(float(v / norm) for v in raw) if norm > 0 else tuple(0.0 for _ in raw)
        return SparseVector(idx, vals, self.dim)

    def transform_many(self, texts: Iterable[str]) -> sp.csr_matrix:
        """Row-stacked :meth:`transform` output as a CSR matrix."""
        indptr, indices, data = [0], [], []
        for text in texts:
            v = self.transform(text)
            indices.extend(v.indices)
            data.extend(v.values)
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(indptr) - 1, self.dim),
        )

    def count_matrix(self, texts: Iterable[str]) -> sp.csr_matrix:
        indptr, indices, data = [0], [], []
        for text in texts:
            c = self.counts(text)
            indices.extend(c)
            data.extend(c.values())
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(indptr) - 1, self.dim),
        )

    def to_dict(self) -> dict:
        vocab = sorted(self.vocabulary, key=self.vocabulary.get)
        return {"vocabulary": vocab, "idf": [float(x) for x in self.idf], "lowercase": self.lowercase,
                "min_df": self.min_df}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TfidfModel":
        vocab = {t: i for i, t in enumerate(obj["vocabulary"])}
        return cls(vocab, obj["idf"], obj.get("lowercase", True), obj.get("min_df", 1))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TfidfModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = fingerprint(self.to_dict())
        return self._fingerprint


def fit_tfidf(corpus: Sequence[str], min_df: int = 1, lowercase: bool = True) -> TfidfModel:
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df = Counter()
    for text in corpus:
        df.update(set(tokenize(text, lowercase)))
    kept = sorted(t for t, n in df.items() if n >= min_df)
    if not kept:
        raise EmptyVocabulary(f"no token reaches document frequency {min_df}")
    n = len(corpus)
    idf = [math.log((1 + n) / (1 + df[t])) + 1.0 for t in kept]
    return TfidfModel({t: i for i, t in enumerate(kept)}, idf, lowercase, min_df)


def cosine_similarity(v, w) -> float:
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise DimensionMismatch(f"dimensions differ: {v.shape} vs {w.shape}")
    nv = math.sqrt(float(np.dot(v, v)))
    nw = math.sqrt(float(np.dot(w, w)))
    if nv == 0 or nw == 0:
        raise ZeroNorm("cosine similarity of a zero vector is undefined")
    return min(1.0, max(-1.0, float(np.dot(v, w)) / (nv * nw)))


class EmbeddingTable:
    """Document id -> dense vector, all of one dimension and non-zero norm."""

    def __init__(self, vectors: Mapping[str, np.ndarray] | None = None):
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self.dim: int | None = None
        for key, vec in (vectors or {}).items():
            self.add(key, vec)
        self._matrix = None

    def add(self, key: str, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if key in self._index:
            raise DuplicateKey(f"embedding id {key!r} appears twice")
        if self.dim is None:
            self.dim = vec.shape[0]
        elif vec.shape[0] != self.dim:
            raise RaggedDimensions(f"embedding {key!r} has dimension {vec.shape[0]}, expected {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding {key!r} has non-finite entries")
        if not np.any(vec):
            raise ZeroNormVector(f"embedding {key!r} is the zero vector")
        self._index[key] = len(self._ids)
        self._ids.append(key)
        self._rows.append(vec)
        self._matrix = None

    def __len__(self):
        return len(self._ids)

    def __contains__(self, key):
        return key in self._index

    def __getitem__(self, key) -> np.ndarray:
        try:
            return self._rows[self._index[key]]
        except KeyError:
            raise MissingEmbedding(f"no embedding for document {key!r}") from None

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def matrix(self, keys: Sequence[str]) -> np.ndarray:
        missing = [k for k in keys if k not in self._index]
        if missing:
            raise MissingEmbedding(f"no embedding for document(s) {missing[:5]}")
        if not keys:
            return np.zeros((0, self.dim or 0))
        return np.vstack([self._rows[self._index[k]] for k in keys])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", *[f"v{i}" for i in range(self.dim or 0)]])
            for key, row in zip(self._ids, self._rows):
                writer.writerow([key, *[repr(float(x)) for x in row]])

    @classmethod
    def from_tfidf(cls, model: TfidfModel, ids: Sequence[str], texts: Sequence[str]) -> "EmbeddingTable":
        """Densified TF-IDF vectors, the fallback when no embedding file is given."""
        table = cls()
        for key, text in zip(ids, texts):
            table.add(key, model.transform(text).to_dense())
        return table


def load_embeddings(path) -> EmbeddingTable:
    """Read a ``id,v0,v1,...`` CSV (header row required)."""
    table = EmbeddingTable()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ValueError(f"{path}: expected a header row starting with 'id'")
        for row in reader:
            if not row:
                continue
            table.add(row[0], [float(x) for x in row[1:]])
    return table
