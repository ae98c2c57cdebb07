"""Numpy fallback for the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def mean_cosine(cands, anchors):
    cnorm = np.sqrt((cands * cands).sum(axis=1))
    anorm = np.sqrt((anchors * anchors).sum(axis=1))
    sims = (cands @ anchors.T) / np.outer(cnorm, anorm)
    return sims.sum(axis=1) / anchors.shape[0]


def macro_f1_from_confusion(cm):
    K = cm.shape[0]
    total = 0.0
    for c in range(K):
        tp = int(cm[c, c])
        pred = int(cm[:, c].sum())
        true = int(cm[c, :].sum())
        p = tp / pred if pred > 0 else 0.0
        r = tp / true if true > 0 else 0.0
        total += 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return total / K


def subset_predictions(probs, argmaxes, members, hard):
    acc = probs[members[0]].copy()
    for j in members[1:]:
        acc += probs[j]
    mean = acc / len(members)
    if not hard:
        return mean.argmax(axis=1)
    K = probs.shape[2]
    votes = np.zeros((probs.shape[1], K), dtype=np.int64)
    rows = np.arange(probs.shape[1])
    for j in members:
        np.add.at(votes, (rows, argmaxes[j]), 1)
    tied = votes == votes.max(axis=1, keepdims=True)
    return np.where(tied, mean, -np.inf).argmax(axis=1)


def score_subsets(probs, gold, masks, hard):
    M, N, K = probs.shape
    argmaxes = probs.argmax(axis=2)
    out = np.empty(len(masks), dtype=np.float64)
    for s, mask in enumerate(masks):
        members = [j for j in range(M) if (int(mask) >> j) & 1]
        pred = subset_predictions(probs, argmaxes, members, hard)
        cm = np.bincount(gold * K + pred, minlength=K * K).reshape(K, K)
        out[s] = macro_f1_from_confusion(cm)
    return out
