import hashlib
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sexismkit.corpus import SEXIST, Dataset, Document, LabelHierarchy
from sexismkit.ensemble import (
    EnsembleSpec,
    HierarchicalSpec,
    PredictionCache,
    hard_vote,
    predict_ensemble,
    predict_ensemble_many,
    predict_hierarchical,
    predict_hierarchical_many,
    search_subsets,
    search_subsets_matrix,
    soft_vote,
)
from sexismkit.errors import (
    ConfigError,
    DimensionMismatch,
    TaskMismatch,
    TooManyCandidates,
    UnknownModel,
    WeightCountMismatch,
)

CANON = LabelHierarchy.canonical()


class FixedModel:
    """Stand-in model: a lookup from text to probability vector, or a hash-based generator."""

    def __init__(self, name, task, classes, table=None, seed=None, calls=None):
        self.name, self.task, self.classes = name, task, tuple(classes)
        self.table, self.seed, self.calls = table or {}, seed, calls
        self.fingerprint = name

    def _row(self, text):
        if text in self.table:
            return np.asarray(self.table[text], dtype=np.float64)
        digest = hashlib.sha256(f"{self.seed}:{text}".encode()).digest()
        raw = np.frombuffer(digest[: len(self.classes)], dtype=np.uint8).astype(np.float64) + 1.0
        return raw / raw.sum()

    def predict_proba_many(self, texts):
        if self.calls is not None:
            self.calls.append((self.name, tuple(texts)))
        return np.array([self._row(t) for t in texts]).reshape(len(texts), len(self.classes))


PROB = st.integers(2, 5).flatmap(
    lambda k: st.lists(
        st.lists(st.integers(0, 20), min_size=k, max_size=k).filter(any).map(lambda v: [x / sum(v) for x in v]),
        min_size=1, max_size=7)
)


# voting
def test_soft_vote_examples():
    np.testing.assert_allclose(soft_vote([[0.6, 0.4], [0.2, 0.8]]), [0.4, 0.6], atol=1e-15)
    assert int(np.argmax(soft_vote([[0.6, 0.4], [0.2, 0.8]]))) == 1
    np.testing.assert_array_equal(soft_vote([[0.1, 0.7, 0.2]]), [0.1, 0.7, 0.2])
    np.testing.assert_allclose(soft_vote([[0.3, 0.7]] * 5), [0.3, 0.7], atol=1e-15)


def test_soft_vote_errors():
    with pytest.raises(DimensionMismatch):
        soft_vote([[0.5, 0.5], [0.2, 0.3, 0.5]])
    with pytest.raises(WeightCountMismatch):
        soft_vote([[0.5, 0.5], [0.2, 0.8]], weights=[1.0])
    with pytest.raises(ValueError):
        soft_vote([])


def test_weighted_soft_vote():
    out = soft_vote([[0.6, 0.4], [0.2, 0.8]], weights=[3.0, 1.0])
    np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-15)


def test_hard_vote_examples():
    assert hard_vote([[0.9, 0.1], [0.6, 0.4], [0.3, 0.7]]) == 0
    # 2-member tie, the mean favours class 1
    assert hard_vote([[0.55, 0.45], [0.1, 0.9]]) == 1
    assert hard_vote([[0.2, 0.5, 0.3]]) == 1


def test_hard_vote_three_way_tie_uses_soft_mean_over_tied():
    panel = [[0.5, 0.3, 0.2, 0.0], [0.1, 0.6, 0.3, 0.0], [0.1, 0.2, 0.7, 0.0]]
    # one vote each for classes 0, 1, 2; means 0.233, 0.367, 0.4
    assert hard_vote(panel) == oracles.hard_label(panel) == 2


def test_hard_vote_exact_mean_tie_goes_to_lowest_class():
    panel = [[0.75, 0.25], [0.25, 0.75]]
    assert hard_vote(panel) == oracles.hard_label(panel) == 0


@given(PROB)
def test_voting_matches_oracle(panel):
    np.testing.assert_array_equal(soft_vote(panel), oracles.mean_vector(panel))
    assert int(np.argmax(soft_vote(panel))) == oracles.soft_label(panel)
    assert hard_vote(panel) == oracles.hard_label(panel)


@given(PROB, st.randoms(use_true_random=False))
def test_voting_permutation_invariant(panel, rnd):
    shuffled = list(panel)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(soft_vote(shuffled), soft_vote(panel), atol=1e-15)
    assert hard_vote(shuffled) == hard_vote(panel)


@given(PROB, st.data())
def test_soft_vote_simplex_and_weight_scale(panel, data):
    weights = data.draw(st.lists(st.floats(0.01, 10), min_size=len(panel), max_size=len(panel)))
    scale = data.draw(st.floats(0.01, 100))
    a = soft_vote(panel, weights)
    b = soft_vote(panel, [w * scale for w in weights])
    assert np.all(a >= 0) and abs(a.sum() - 1) <= 1e-9
    np.testing.assert_allclose(a, b, atol=1e-12)
    u = soft_vote(panel)
    assert np.all(u >= 0) and abs(u.sum() - 1) <= 1e-9


@given(st.lists(st.integers(0, 20), min_size=2, max_size=5).filter(any), st.integers(1, 8))
def test_identical_members_agree(vec, m):
    p = [x / sum(vec) for x in vec]
    panel = [p] * m
    assert hard_vote(panel) == int(np.argmax(soft_vote(panel))) == oracles.first_argmax(p)


# spec and prediction
def test_spec_validation():
    with pytest.raises(ConfigError):
        EnsembleSpec(())
    with pytest.raises(ConfigError):
        EnsembleSpec(("a", "a"))
    with pytest.raises(ConfigError):
        EnsembleSpec(("a",), "median")
    with pytest.raises(WeightCountMismatch):
        EnsembleSpec(("a", "b"), weights=(1.0,))


def test_single_member_is_identity():
    m = FixedModel("m", "B", CANON.task_b, seed=1)
    texts = [f"t{i}" for i in range(20)]
    labels, vecs = predict_ensemble_many(EnsembleSpec(("m",)), {"m": m}, texts)
    probs = m.predict_proba_many(texts)
    np.testing.assert_array_equal(vecs, probs)
    assert labels == [CANON.task_b[i] for i in probs.argmax(axis=1)]


def test_five_member_soft_fixture():
    rows = {
        "m1": [0.1, 0.2, 0.3, 0.4],
        "m2": [0.4, 0.3, 0.2, 0.1],
        "m3": [0.25, 0.25, 0.4, 0.1],
        "m4": [0.0, 0.5, 0.5, 0.0],
        "m5": [0.3, 0.1, 0.1, 0.5],
    }
    reg = {k: FixedModel(k, "B", CANON.task_b, table={"x": v}) for k, v in rows.items()}
    label, vec = predict_ensemble(EnsembleSpec(tuple(rows)), reg, "x")
    expected = [sum(r[c] for r in rows.values()) / 5 for c in range(4)]
    np.testing.assert_allclose(vec, expected, atol=1e-15)
    assert label == CANON.task_b[2]
    hard_label, hard_vec = predict_ensemble(EnsembleSpec(tuple(rows), "hard"), reg, "x")
    np.testing.assert_allclose(hard_vec, expected, atol=1e-15)
    assert hard_label == CANON.task_b[oracles.hard_label(list(rows.values()))]


def test_unknown_model_and_task_mismatch():
    reg = {"a": FixedModel("a", "A", CANON.task_a, seed=0), "b": FixedModel("b", "B", CANON.task_b, seed=0)}
    with pytest.raises(UnknownModel):
        predict_ensemble(EnsembleSpec(("a", "zz")), reg, "x")
    with pytest.raises(TaskMismatch):
        predict_ensemble(EnsembleSpec(("a", "b")), reg, "x")
    with pytest.raises(TaskMismatch):
        predict_ensemble(EnsembleSpec(("a",), task="B"), reg, "x")


def test_prediction_cache_reuses_passes():
    calls = []
    reg = {k: FixedModel(k, "A", CANON.task_a, seed=i, calls=calls) for i, k in enumerate("abc")}
    docs = [Document(f"d{i}", f"text {i}", "s", {"A": CANON.task_a[i % 2]}) for i in range(30)]
    val = Dataset(docs, CANON, "val")
    cache = PredictionCache()
    search_subsets(["a", "b", "c"], "soft", val, reg, cache=cache)
    search_subsets(["a", "b", "c"], "hard", val, reg, cache=cache)
    assert len(calls) == 3 and cache.misses == 3


# subset search
def random_stack(m, n, k, seed, coarse=True):
    rng = np.random.default_rng(seed)
    if coarse:
        raw = rng.integers(0, 4, size=(m, n, k)).astype(np.float64) + (rng.random((m, n, 1)) < 0.1)
        raw[raw.sum(axis=2) == 0] = 1.0
        probs = raw / raw.sum(axis=2, keepdims=True)
    else:
        probs = rng.dirichlet(np.ones(k), size=(m, n))
    return probs, rng.integers(k, size=n)


@given(st.integers(1, 8), st.integers(1, 40), st.integers(2, 4), st.integers(0, 10_000),
       st.sampled_from(["soft", "hard"]), st.booleans(), st.randoms(use_true_random=False))
def test_search_matches_brute_force(m, n, k, seed, strategy, coarse, rnd):
    probs, gold = random_stack(m, n, k, seed, coarse)
    ids = [f"m{j}" for j in range(m)]
    rnd.shuffle(ids)  # the search must not depend on candidate order
    best, every = search_subsets_matrix(probs, gold, ids, strategy, return_all=True)
    panel = [[list(probs[j, i]) for i in range(n)] for j in range(m)]
    ob, oe = oracles.brute_force_subsets(panel, list(gold), ids, strategy)
    assert {r.members: r.score for r in every} == oe
    assert [(r.size, r.members, r.score) for r in best] == [(s, *ob[s]) for s in sorted(ob)]


def test_single_candidate():
    probs, gold = random_stack(1, 20, 3, 0)
    (row,) = search_subsets_matrix(probs, gold, ["only"])
    assert row.size == 1 and row.members == ("only",)
    assert row.score == oracles.macro_f1(list(gold), [oracles.first_argmax(list(p)) for p in probs[0]], [0, 1, 2])


def test_complementary_experts():
    # member "a" is right on class 0 only, "b" on class 1 only; "c" guesses
    # class 2 everywhere; together a and b cover everything
    n = 30
    gold = np.array([0] * 10 + [1] * 10 + [2] * 10)
    probs = np.zeros((3, n, 3))
    for i, g in enumerate(gold):
        probs[0, i] = [0.9, 0.05, 0.05] if g == 0 else [0.2, 0.2, 0.6] if g == 2 else [0.4, 0.3, 0.3]
        probs[1, i] = [0.05, 0.9, 0.05] if g == 1 else [0.2, 0.2, 0.6] if g == 2 else [0.3, 0.4, 0.3]
        probs[2, i] = [0.3, 0.3, 0.4]
    ids = ["a", "b", "c"]
    best = {r.size: r for r in search_subsets_matrix(probs, gold, ids)}
    panel = [[list(probs[j, i]) for i in range(n)] for j in range(3)]
    ob, _ = oracles.brute_force_subsets(panel, list(gold), ids)
    assert best[2].members == ("a", "b") == ob[2][0]
    assert best[2].score == 1.0
    for combo in itertools.combinations(ids, 2):
        preds = [oracles.soft_label([panel[ids.index(c)][i] for c in combo]) for i in range(n)]
        assert best[2].score >= oracles.macro_f1(list(gold), preds, [0, 1, 2])


def test_too_many_candidates():
    probs, gold = random_stack(17, 5, 2, 0)
    with pytest.raises(TooManyCandidates):
        search_subsets_matrix(probs, gold, [f"m{j:02d}" for j in range(17)])
    reg = {f"m{j:02d}": FixedModel(f"m{j:02d}", "A", CANON.task_a, seed=j) for j in range(17)}
    val = Dataset([Document("d", "x", "s", {"A": SEXIST})], CANON)
    with pytest.raises(TooManyCandidates):
        search_subsets(list(reg), "soft", val, reg)


def test_search_over_models_matches_matrix():
    reg = {k: FixedModel(k, "B", CANON.task_b, seed=i) for i, k in enumerate(["x", "y", "z", "w"])}
    docs = [Document(f"d{i}", f"text {i}", "s", {"A": SEXIST, "B": CANON.task_b[i % 4]}) for i in range(40)]
    val = Dataset(docs, CANON, "val")
    got = search_subsets(list(reg), "hard", val, reg, task="B")
    stack = np.stack([reg[k].predict_proba_many(val.texts) for k in reg])
    gold = [CANON.task_b.index(y) for y in val.labels("B")]
    assert got == search_subsets_matrix(stack, gold, list(reg), "hard")


# hierarchical
def fine_spec_for(cat, seeds, full_classes=False, calls=None, strategy="soft"):
    classes = CANON.task_c if full_classes else CANON.children(cat)
    ids = [f"{cat[:2]}_{s}" for s in seeds]
    models = {i: FixedModel(i, "C", classes, seed=s, calls=calls) for i, s in zip(ids, seeds)}
    return EnsembleSpec(tuple(ids), strategy), models


def build_hierarchy(seed, full_classes=False, calls=None, n_cat=3, strategy="soft"):
    reg = {f"cat{j}": FixedModel(f"cat{j}", "B", CANON.task_b, seed=seed * 10 + j) for j in range(n_cat)}
    fine = {}
    for c, cat in enumerate(CANON.task_b):
        spec, models = fine_spec_for(cat, [seed * 100 + c * 3 + j for j in range(1 + c % 3)], full_classes,
                                     calls, strategy)
        fine[cat] = spec
        reg.update(models)
    return HierarchicalSpec(EnsembleSpec(tuple(f"cat{j}" for j in range(n_cat)), strategy), fine, CANON), reg


def test_hierarchical_routes_to_category_model():
    calls = []
    texts = ["t0", "t1", "t2", "t3"]
    table = {t: np.eye(4)[i] * 0.97 + 0.01 for i, t in enumerate(texts)}
    reg = {"cat": FixedModel("cat", "B", CANON.task_b, table=table)}
    fine = {}
    for cat in CANON.task_b:
        spec, models = fine_spec_for(cat, [1], calls=calls)
        fine[cat] = spec
        reg.update(models)
    spec = HierarchicalSpec(EnsembleSpec(("cat",)), fine, CANON)
    out = predict_hierarchical_many(spec, reg, texts)
    assert [c for c, _ in out] == list(CANON.task_b)
    routed = {name: texts for name, texts in calls}
    for i, cat in enumerate(CANON.task_b):
        assert routed[fine[cat].members[0]] == (texts[i],)
    for cat, f in out:
        assert CANON.parent(f) == cat
    assert predict_hierarchical(spec, reg, "t2") == out[2]


@given(st.integers(0, 10_000), st.booleans(), st.sampled_from(["soft", "hard"]),
       st.lists(st.text(max_size=10), min_size=1, max_size=25))
def test_hierarchical_consistency_fuzzed(seed, full_classes, strategy, texts):
    spec, reg = build_hierarchy(seed, full_classes, strategy=strategy)
    for cat, fine in predict_hierarchical_many(spec, reg, texts):
        assert cat in CANON.task_b
        assert CANON.parent(fine) == cat


@given(st.integers(0, 10_000), st.lists(st.text(max_size=10), min_size=1, max_size=25))
def test_two_child_category_single_fine_model(seed, texts):
    two = [c for c in CANON.task_b if len(CANON.children(c)) == 2][0]
    spec, reg = build_hierarchy(seed)
    single, models = fine_spec_for(two, [seed + 7], full_classes=True)
    reg.update(models)
    fine = dict(spec.fine)
    fine[two] = single
    spec = HierarchicalSpec(spec.category, fine, CANON)
    for cat, f in predict_hierarchical_many(spec, reg, texts):
        if cat == two:
            assert f in CANON.children(two)


def test_hierarchical_spec_requires_every_category():
    spec, _ = build_hierarchy(0)
    fine = dict(spec.fine)
    fine.pop(CANON.task_b[0])
    with pytest.raises(ConfigError):
        HierarchicalSpec(spec.category, fine, CANON)
    with pytest.raises(ConfigError):
        HierarchicalSpec(spec.category, {**spec.fine, "5. extra": spec.category}, CANON)
