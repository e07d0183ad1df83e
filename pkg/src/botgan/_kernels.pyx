# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: CART split search, tree traversal, two-sample KS sweep.

Must stay arithmetically identical to ``_kernels_py``: split scores are built
from exact integer sums of squared class counts, so both backends pick the
same split.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


cdef bint _exact_better(object sl, object sr, object nl, object nr,
                        object bsl, object bsr, object bnl, object bnr):
    # (sl/nl + sr/nr) > (bsl/bnl + bsr/bnr) in Python integers
    return (sl * nr + sr * nl) * bnl * bnr > (bsl * bnr + bsr * bnl) * nl * nr


def best_split(const double[:, ::1] X, const i64[::1] y, const i64[::1] idx,
               const i64[::1] features, int n_classes, int min_samples_leaf=1):
    """Best Gini split of the rows ``idx`` over ``features``.

    Returns ``(feature, threshold, score, sum_sq_left, sum_sq_right, n_left)``
    where ``score = sum_sq_left / n_left + sum_sq_right / n_right``; feature is
    -1 when no admissible split exists.
    """
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t i, fi, k
    cdef i64 f, r
    cdef double[::1] vals = np.empty(n, dtype=np.float64)
    cdef i64[::1] total = np.zeros(n_classes, dtype=np.int64)
    cdef i64[::1] left = np.zeros(n_classes, dtype=np.int64)
    cdef i64[::1] right = np.zeros(n_classes, dtype=np.int64)
    cdef i64[::1] order
    cdef i64 sl, sr, sr0 = 0, nl, nr
    cdef double v, vn, score, thr, tol
    cdef double best_score = -1.0, best_thr = 0.0
    cdef i64 best_f = -1, best_sl = 0, best_sr = 0, best_nl = 0

    for i in range(n):
        total[y[idx[i]]] += 1
    for k in range(n_classes):
        sr0 += total[k] * total[k]

    for fi in range(features.shape[0]):
        f = features[fi]
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals).astype(np.int64)
        for k in range(n_classes):
            left[k] = 0
            right[k] = total[k]
        sl = 0
        sr = sr0
        for i in range(n - 1):
            r = idx[order[i]]
            k = y[r]
            sl += 2 * left[k] + 1
            left[k] += 1
            sr -= 2 * right[k] - 1
            right[k] -= 1
            v = vals[order[i]]
            vn = vals[order[i + 1]]
            if not vn > v:
                continue
            nl = i + 1
            nr = n - nl
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            score = (<double> sl) / (<double> nl) + (<double> sr) / (<double> nr)
            tol = 1e-12 * best_score
            if score > best_score + tol or (
                    score >= best_score - tol
                    and _exact_better(sl, sr, nl, nr, best_sl, best_sr, best_nl, n - best_nl)):
                thr = 0.5 * (v + vn)
                if not thr < vn:
                    thr = v
                best_score = score
                best_thr = thr
                best_f = f
                best_sl = sl
                best_sr = sr
                best_nl = nl
    return int(best_f), float(best_thr), float(best_score), int(best_sl), int(best_sr), int(best_nl)


def apply_tree(const double[:, ::1] X, const i64[::1] feature, const double[::1] threshold,
               const i64[::1] left, const i64[::1] right):
    """Leaf node index reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0], i
    cdef i64 node
    out = np.empty(n, dtype=np.int64)
    cdef i64[::1] leaf = out
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        leaf[i] = node
    return out


def ks_statistic(const double[::1] a, const double[::1] b):
    """Two-sample KS statistic of two *sorted* samples via an ECDF merge sweep."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i = 0, j = 0
    cdef double v, d, best = 0.0
    while i < na or j < nb:
        if j >= nb or (i < na and a[i] <= b[j]):
            v = a[i]
        else:
            v = b[j]
        while i < na and a[i] <= v:
            i += 1
        while j < nb and b[j] <= v:
            j += 1
        d = (<double> i) / (<double> na) - (<double> j) / (<double> nb)
        if d < 0:
            d = -d
        if d > best:
            best = d
    return best
