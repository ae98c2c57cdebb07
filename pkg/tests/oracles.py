"""Independent reference implementations used as test oracles.

Everything here is plain Python (math, itertools, collections) and shares no
code with the package under test, so agreement is evidence of correctness
rather than of a shared bug.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import Counter

TOKEN = re.compile(r"\[[A-Z]+\]|\w+")


# features
def tokens(text, lowercase=True):
    out = TOKEN.findall(text)
    return [t if t.startswith("[") else (t.lower() if lowercase else t) for t in out]


def tfidf_oracle(corpus, min_df=1, lowercase=True):
    """Return (idf dict, transform function) computed by brute force."""
    n = len(corpus)
    df = Counter()
    for doc in corpus:
        df.update(set(tokens(doc, lowercase)))
    idf = {t: math.log((1 + n) / (1 + c)) + 1 for t, c in df.items() if c >= min_df}

    def transform(text):
        tf = Counter(t for t in tokens(text, lowercase) if t in idf)
        raw = {t: c * idf[t] for t, c in tf.items()}
        norm = math.sqrt(math.fsum(v * v for v in raw.values()))
        return {t: v / norm for t, v in raw.items()} if norm > 0 else {}

    return idf, transform


def cosine(v, w):
    dot = math.fsum(a * b for a, b in zip(v, w))
    nv = math.sqrt(math.fsum(a * a for a in v))
    nw = math.sqrt(math.fsum(b * b for b in w))
    return dot / (nv * nw)


def mean_cosine(cand, anchors):
    return math.fsum(cosine(cand, a) for a in anchors) / len(anchors)


def brute_force_select(pool, anchors, threshold, pool_labels=None, allowed=None):
    """pool: {id: vector}; returns admitted ids sorted by (-score, id)."""
    scored = []
    for pid, vec in pool.items():
        s = mean_cosine(vec, anchors)
        if s < threshold:
            continue
        if allowed is not None and pool_labels[pid] not in allowed:
            continue
        scored.append((-s, pid))
    return [pid for _, pid in sorted(scored)]


# losses
def softmax(z):
    m = max(z)
    e = [math.exp(x - m) for x in z]
    s = math.fsum(e)
    return [x / s for x in e]


def sigmoid(z):
    return 1 / (1 + math.exp(-z)) if z >= 0 else math.exp(z) / (1 + math.exp(z))


def probs(logits):
    if len(logits) == 1:
        p = sigmoid(logits[0])
        return [1 - p, p]
    return softmax(logits)


def ce(p, gold):
    return -math.log(p[gold])


def focal(p, gold, gamma, alpha):
    pt = p[gold]
    return -alpha * (1 - pt) ** gamma * math.log(pt)


def wbce(p, gold, w):
    y = 1 if gold == 1 else 0
    return -(w * y * math.log(p[1]) + (1 - y) * math.log(p[0]))


def loss_of_logits(kind, logits, gold, **kw):
    p = probs(logits)
    if kind == "cross-entropy":
        return ce(p, gold)
    if kind == "focal":
        return focal(p, gold, kw.get("gamma", 2.0), kw.get("alpha", 1.0))
    return wbce(p, gold, kw.get("w", 1.0))


def central_difference(f, x, h=1e-5):
    grad = []
    for i in range(len(x)):
        up = list(x)
        dn = list(x)
        up[i] += h
        dn[i] -= h
        grad.append((f(up) - f(dn)) / (2 * h))
    return grad


def adamw(params, grads_seq, lr, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-loop AdamW over a sequence of gradient vectors."""
    m = [0.0] * len(params)
    v = [0.0] * len(params)
    p = list(params)
    for t, g in enumerate(grads_seq, start=1):
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            p[i] = p[i] - lr * (mh / (math.sqrt(vh) + eps) + wd * p[i])
    return p


# voting
def first_argmax(values):
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def mean_vector(panel):
    k = len(panel[0])
    out = []
    for c in range(k):
        s = 0.0
        for member in panel:
            s += member[c]
        out.append(s / len(panel))
    return out


def soft_label(panel):
    return first_argmax(mean_vector(panel))


def hard_label(panel):
    votes = Counter(first_argmax(member) for member in panel)
    top = max(votes.values())
    tied = sorted(c for c, n in votes.items() if n == top)
    if len(tied) == 1:
        return tied[0]
    mean = mean_vector(panel)
    return max(tied, key=lambda c: (mean[c], -c))


# metrics
def per_class(golds, preds, classes):
    rows = []
    for c in classes:
        tp = sum(1 for g, p in zip(golds, preds) if g == c and p == c)
        fp = sum(1 for g, p in zip(golds, preds) if g != c and p == c)
        fn = sum(1 for g, p in zip(golds, preds) if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append((prec, rec, f1, tp + fn))
    return rows


def macro_f1(golds, preds, classes):
    total = 0.0
    for _, _, f1, _ in per_class(golds, preds, classes):
        total += f1
    return total / len(classes)


def brute_force_subsets(panel_by_member, gold, ids, strategy="soft"):
    """panel_by_member[j][n] is member j's probability vector for sample n.

    Returns (best per size as {size: (members, score)}, all scores as {members: score}).
    """
    order = sorted(range(len(ids)), key=lambda j: ids[j])
    k = len(panel_by_member[0][0])
    classes = list(range(k))
    every = {}
    for size in range(1, len(ids) + 1):
        for combo in itertools.combinations(order, size):
            preds = []
            for n in range(len(gold)):
                panel = [panel_by_member[j][n] for j in combo]
                preds.append(soft_label(panel) if strategy == "soft" else hard_label(panel))
            every[tuple(ids[j] for j in combo)] = macro_f1(list(gold), preds, classes)
    best = {}
    for members, score in every.items():
        cur = best.get(len(members))
        if cur is None or score > cur[1] or (score == cur[1] and members < cur[0]):
            best[len(members)] = (members, score)
    return best, every


# naive Bayes
def nb_posterior(train_docs, labels, classes, text, smoothing=1.0):
    """Multinomial NB posterior with additive smoothing over the training vocabulary."""
    vocab = sorted({t for d in train_docs for t in tokens(d)})
    logs = []
    for c in classes:
        docs = [d for d, y in zip(train_docs, labels) if y == c]
        counts = Counter(t for d in docs for t in tokens(d))
        denom = sum(counts.values()) + smoothing * len(vocab)
        lp = math.log(len(docs) / len(train_docs))
        for t in tokens(text):
            if t in vocab:
                lp += math.log((counts[t] + smoothing) / denom)
        logs.append(lp)
    m = max(logs)
    e = [math.exp(x - m) for x in logs]
    return [x / sum(e) for x in e]
