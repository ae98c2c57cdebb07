"""Keyword-driven synthetic corpora for tests, benchmarks and the demo config.

Every fine class owns a small private vocabulary, every category a shared
one, and all documents draw filler words from a common pool. A per-document
noise draw swaps in a keyword from an unrelated class so that models cannot
reach perfect accuracy.
"""

from __future__ import annotations

import numpy as np

from .corpus import NON_SEXIST, SEXIST, Dataset, Document, LabelHierarchy

EXTERNAL_CATEGORIES = (
    "ideological-inequality",
    "stereotyping-dominance",
    "objectification",
    "sexual-violence",
    "misogyny-non-sexual-violence",
)
# which canonical category each external category resembles most
_EXTERNAL_TWIN = {
    "ideological-inequality": 3,
    "stereotyping-dominance": 3,
    "objectification": 1,
    "sexual-violence": 0,
    "misogyny-non-sexual-violence": 0,
}


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


FILLER = _words("w", 120)
NEUTRAL = _words("calm", 25)
SEXIST_WORDS = _words("sx", 10)


def category_words(k: int) -> list[str]:
    return _words(f"cat{k}x", 8)


def fine_words(j: int) -> list[str]:
    return _words(f"fine{j}x", 6)


def external_hierarchy() -> LabelHierarchy:
    """A five-category pool taxonomy with no fine level."""
    return LabelHierarchy(task_b=EXTERNAL_CATEGORIES)


def _text(rng, keywords: list[str], n_filler: int = 7, decorate: bool = False) -> str:
    words = list(rng.choice(FILLER, size=n_filler)) + keywords
    rng.shuffle(words)
    text = " ".join(words)
    if decorate:
        r = rng.random()
        if r < 0.2:
            text = f"@user{rng.integers(1000)} {text}"
        elif r < 0.35:
            text = f"{text} https://example.org/p/{rng.integers(1000)}"
        elif r < 0.45:
            text = f"{text} café · naïve!"
    return text


def _keywords(rng, h: LabelHierarchy, k: int | None, fine: str | None, noise: float) -> list[str]:
    """Keywords for a non-sexist (``k is None``) or category-``k`` document."""
    if k is None:
        kw = [str(w) for w in rng.choice(NEUTRAL, size=2)]
        if rng.random() < noise * 0.5:
            kw.append(str(rng.choice(SEXIST_WORDS)))
        if rng.random() < noise * 0.3:
            kw.append(str(rng.choice(category_words(int(rng.integers(len(h.task_b)))))))
        return kw
    kw = [str(rng.choice(SEXIST_WORDS)), str(rng.choice(category_words(k)))]
    if fine is not None:
        kw += [str(w) for w in rng.choice(fine_words(h.task_c.index(fine)), size=2)]
    if rng.random() < noise:
        kw[1] = str(rng.choice(category_words(int(rng.integers(len(h.task_b))))))
        if len(kw) > 2:
            kw[2] = str(rng.choice(fine_words(int(rng.integers(len(h.task_c))))))
    if rng.random() < noise * 0.4:
        kw[0] = str(rng.choice(NEUTRAL))
    return kw


def make_corpus(
    n: int,
    hierarchy: LabelHierarchy | None = None,
    sexist_fraction: float = 0.243,
    category_weights=(0.091, 0.468, 0.343, 0.098),
    noise: float = 0.25,
    seed: int = 0,
    name: str = "synthetic",
    source: str = "synthetic",
    fine_labels: bool = True,
    decorate: bool = False,
    id_prefix: str = "",
    label_tasks=("A", "B", "C"),
    label_noise: float = 0.0,
) -> Dataset:
    """Labeled corpus whose class skew mimics the shared-task training data.

    With probability ``label_noise`` a document's text is written as if it
    belonged to a random other class while its gold labels stay unchanged,
    which puts a ceiling on attainable accuracy.
    """
    h = hierarchy or LabelHierarchy.canonical()
    rng = np.random.default_rng(seed)
    weights = np.asarray(category_weights, dtype=float)[: len(h.task_b)]
    weights = weights / weights.sum()

    def draw():
        if rng.random() >= sexist_fraction:
            return None, None
        k = int(rng.choice(len(h.task_b), p=weights))
        kids = h.children(h.task_b[k]) if h.task_c else ()
        return k, (kids[int(rng.integers(len(kids)))] if kids else None)

    docs = []
    for i in range(n):
        k, fine = draw()
        if k is None:
            labels = {"A": NON_SEXIST}
        else:
            labels = {"A": SEXIST, "B": h.task_b[k]}
            if fine is not None and fine_labels:
                labels["C"] = fine
        shown_k, shown_fine = (k, fine)
        if label_noise and rng.random() < label_noise:
            shown_k, shown_fine = draw()
            if shown_k is None and k is None:
                shown_k = int(rng.choice(len(h.task_b), p=weights))
                kids = h.children(h.task_b[shown_k]) if h.task_c else ()
                shown_fine = kids[int(rng.integers(len(kids)))] if kids else None
        kw = _keywords(rng, h, shown_k, shown_fine, noise)
        labels = {t: v for t, v in labels.items() if t in label_tasks}
        docs.append(Document(f"{id_prefix}{i:05d}", _text(rng, kw, decorate=decorate), source, labels))
    return Dataset(docs, h, name)


def make_external_pool(n: int, seed: int = 0, name: str = "pool", source: str = "external") -> Dataset:
    """Sexist documents under the five-category external taxonomy.

    Each external category borrows vocabulary from its closest canonical
    category, so similarity-based selection can find useful candidates.
    """
    h = external_hierarchy()
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n):
        cat = EXTERNAL_CATEGORIES[int(rng.integers(len(EXTERNAL_CATEGORIES)))]
        twin = _EXTERNAL_TWIN[cat]
        kw = [str(rng.choice(SEXIST_WORDS))] + [str(w) for w in rng.choice(category_words(twin), size=2)]
        docs.append(Document(f"{name}{i:05d}", _text(rng, kw, decorate=True), source, {"A": SEXIST, "B": cat}))
    return Dataset(docs, h, name)


def two_clusters(n_anchor: int = 8, n_in: int = 10, n_out: int = 10, seed: int = 0):
    """Anchor texts, in-cluster pool texts and out-of-cluster pool texts with disjoint keywords."""
    rng = np.random.default_rng(seed)
    a_words, b_words = _words("alpha", 6), _words("beta", 6)

    def make(words, count):
        return [" ".join(rng.choice(words, size=5)) for _ in range(count)]

    return make(a_words, n_anchor), make(a_words, n_in), make(b_words, n_out)
