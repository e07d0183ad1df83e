"""Numpy implementations of the compiled kernels (same signatures, same results)."""
import numpy as np


def _exact_better(sl, sr, nl, nr, bsl, bsr, bnl, bnr):
    # (sl/nl + sr/nr) > (bsl/bnl + bsr/bnr) in Python integers
    return (sl * nr + sr * nl) * bnl * bnr > (bsl * bnr + bsr * bnl) * nl * nr


def best_split(X, y, idx, features, n_classes, min_samples_leaf=1):
    n = idx.shape[0]
    yy = y[idx]
    total = np.bincount(yy, minlength=n_classes).astype(np.int64)
    best = (-1, 0.0, -1.0, 0, 0, 0)
    if n < 2:
        return best
    nl = np.arange(1, n, dtype=np.int64)
    nr = n - nl
    size_ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals)
        sv = vals[order]
        onehot = np.zeros((n, n_classes), dtype=np.int64)
        onehot[np.arange(n), yy[order]] = 1
        cum = np.cumsum(onehot, axis=0)[:-1]
        sl = np.sum(cum * cum, axis=1)
        rest = total - cum
        sr = np.sum(rest * rest, axis=1)
        valid = size_ok & (sv[1:] > sv[:-1])
        if not valid.any():
            continue
        score = sl.astype(np.float64) / nl.astype(np.float64) + sr.astype(np.float64) / nr.astype(np.float64)
        score = np.where(valid, score, -np.inf)
        top = score.max()
        near = np.flatnonzero(score >= top - 1e-12 * top)
        i = int(near[0])
        for j in near[1:]:
            if _exact_better(int(sl[j]), int(sr[j]), int(nl[j]), int(nr[j]),
                             int(sl[i]), int(sr[i]), int(nl[i]), int(nr[i])):
                i = int(j)
        tol = 1e-12 * best[2]
        if score[i] > best[2] + tol or (
                score[i] >= best[2] - tol and best[0] >= 0
                and _exact_better(int(sl[i]), int(sr[i]), int(nl[i]), int(nr[i]),
                                  best[3], best[4], best[5], n - best[5])):
            v, vn = sv[i], sv[i + 1]
            thr = 0.5 * (v + vn)
            if not thr < vn:
                thr = v
            best = (int(f), float(thr), float(score[i]), int(sl[i]), int(sr[i]), int(nl[i]))
    return best


def apply_tree(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    rows = np.arange(X.shape[0])
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def ks_statistic(a, b):
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right").astype(np.float64) / float(a.shape[0])
    cdf_b = np.searchsorted(b, grid, side="right").astype(np.float64) / float(b.shape[0])
    return float(np.max(np.abs(cdf_a - cdf_b)))
