# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: ensemble subset scoring and mean cosine similarity.

Arithmetic order mirrors ``_pykernels`` so both backends return identical
floats for subset scores.
"""
import numpy as np
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free


def mean_cosine(const double[:, ::1] cands, const double[:, ::1] anchors):
    # cosine is linear in the unit anchor, so the mean over anchors is one
    # dot product with the mean unit anchor: O((P + A) D) instead of O(P A D)
    cdef Py_ssize_t P = cands.shape[0], A = anchors.shape[0], D = cands.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double dot, s, nc
    out = np.empty(P, dtype=np.float64)
    cdef double[::1] res = out
    centroid_arr = np.zeros(D, dtype=np.float64)
    cdef double[::1] centroid = centroid_arr
    for j in range(A):
        s = 0.0
        for d in range(D):
            s += anchors[j, d] * anchors[j, d]
        s = sqrt(s)
        for d in range(D):
            centroid[d] += anchors[j, d] / s
    for d in range(D):
        centroid[d] /= A
    for i in range(P):
        nc = 0.0
        dot = 0.0
        for d in range(D):
            nc += cands[i, d] * cands[i, d]
            dot += cands[i, d] * centroid[d]
        res[i] = dot / sqrt(nc)
    return out


cdef double _macro_f1(long* cm, Py_ssize_t K):
    cdef Py_ssize_t c, r
    cdef long tp, pred, true
    cdef double p, rc, f, total = 0.0
    for c in range(K):
        tp = cm[c * K + c]
        pred = 0
        true = 0
        for r in range(K):
            pred += cm[r * K + c]
            true += cm[c * K + r]
        p = <double>tp / pred if pred > 0 else 0.0
        rc = <double>tp / true if true > 0 else 0.0
        f = 2.0 * p * rc / (p + rc) if p + rc > 0 else 0.0
        total += f
    return total / K


def score_subsets(const double[:, :, ::1] probs, const long[::1] gold, const long[::1] masks, bint hard):
    cdef Py_ssize_t M = probs.shape[0], N = probs.shape[1], K = probs.shape[2]
    cdef Py_ssize_t S = masks.shape[0]
    cdef Py_ssize_t s, n, k, j, best
    cdef long mask, m, top
    cdef double bestv
    out = np.empty(S, dtype=np.float64)
    cdef double[::1] res = out
    argmax_arr = np.asarray(probs).argmax(axis=2).astype(np.int64)
    cdef const long[:, ::1] amax = argmax_arr
    cdef double* acc = <double*>malloc(K * sizeof(double))
    cdef long* votes = <long*>malloc(K * sizeof(long))
    cdef long* cm = <long*>malloc(K * K * sizeof(long))
    cdef Py_ssize_t* members = <Py_ssize_t*>malloc(M * sizeof(Py_ssize_t))
    cdef Py_ssize_t t
    if acc == NULL or votes == NULL or cm == NULL or members == NULL:
        free(acc); free(votes); free(cm); free(members)
        raise MemoryError()
    try:
        for s in range(S):
            mask = masks[s]
            m = 0
            for j in range(M):
                if (mask >> j) & 1:
                    members[m] = j
                    m += 1
            for k in range(K * K):
                cm[k] = 0
            for n in range(N):
                for k in range(K):
                    acc[k] = 0.0
                    votes[k] = 0
                for t in range(m):
                    j = members[t]
                    for k in range(K):
                        acc[k] += probs[j, n, k]
                    votes[amax[j, n]] += 1
                for k in range(K):
                    acc[k] = acc[k] / m
                best = -1
                if hard:
                    top = 0
                    for k in range(K):
                        if votes[k] > top:
                            top = votes[k]
                    for k in range(K):
                        if votes[k] == top and (best < 0 or acc[k] > bestv):
                            best = k
                            bestv = acc[k]
                else:
                    for k in range(K):
                        if best < 0 or acc[k] > bestv:
                            best = k
                            bestv = acc[k]
                cm[gold[n] * K + best] += 1
            res[s] = _macro_f1(cm, K)
    finally:
        free(acc); free(votes); free(cm); free(members)
    return out
