"""Interpolation-based oversampling baselines: ADASYN, SMOTE and SMOTE-ENN.

All three return the full resampled dataset: the input records first, then
the synthetic records tagged with the technique's provenance. Use
:func:`synthetic_only` to keep just the new rows.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .dataset import Dataset, augment
from .errors import ClassTooSmall, EmptyMinority

_DIRECT_LIMIT = 4_000_000  # n_query * n_ref * d below which distances are exact differences


def _sq_dists(q: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if q.shape[0] * ref.shape[0] * max(q.shape[1], 1) <= _DIRECT_LIMIT:
        diff = q[:, None, :] - ref[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    d = (np.einsum("ij,ij->i", q, q)[:, None] + np.einsum("ij,ij->i", ref, ref)[None, :]
         - 2.0 * (q @ ref.T))
    return np.maximum(d, 0.0)


class NeighborIndex:
    """Exact brute-force k-NN over squared Euclidean distance.

    Neighbor lists never contain the query point itself and are sorted by
    distance, ties broken by lower index.
    """

    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=np.float64)

    def __len__(self):
        return self.points.shape[0]

    def neighbors(self, k: int, rows=None) -> np.ndarray:
        """k nearest indexed points of each indexed point in ``rows`` (default: all)."""
        n = len(self)
        rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
        if k > n - 1:
            raise ValueError(f"k={k} neighbors requested from {n} points")
        out = np.empty((rows.size, k), dtype=np.int64)
        chunk = max(1, min(1024, 4_000_000 // max(n, 1)))
        for lo in range(0, rows.size, chunk):
            r = rows[lo:lo + chunk]
            d = _sq_dists(self.points[r], self.points)
            d[np.arange(r.size), r] = np.inf
            if n <= 512:
                out[lo:lo + r.size] = np.argsort(d, axis=1, kind="stable")[:, :k]
                continue
            kth = np.partition(d, k - 1, axis=1)[:, k - 1]
            for i in range(r.size):
                row = d[i]
                less = np.flatnonzero(row < kth[i])
                ties = np.flatnonzero(row == kth[i])[: k - less.size]
                cand = np.concatenate([less, ties])
                out[lo + i] = cand[np.lexsort((cand, row[cand]))]
        return out


def balance_target(d: Dataset) -> dict[int, int]:
    """Target counts that bring every class present up to the majority count."""
    counts = d.class_counts()
    top = int(counts.max()) if counts.size else 0
    return {c: top for c in range(d.classes.k) if counts[c] > 0}


def phi_target(d: Dataset, phi_a: int, phi_b: int) -> dict[int, int]:
    """Target counts after adding floor(count * a / b) synthetic rows per class."""
    return {c: int(n) + int(n) * phi_a // phi_b for c, n in enumerate(d.class_counts()) if n > 0}


def synthetic_only(d: Dataset, tag: str) -> Dataset:
    return d.subset(np.flatnonzero(d.provenance == tag))


def _deficits(d: Dataset, target: Mapping[int, int], k: int) -> dict[int, int]:
    counts = d.class_counts()
    out = {}
    for c in sorted(target):
        need = int(target[c]) - int(counts[c])
        if need <= 0:
            continue
        if counts[c] == 0:
            raise EmptyMinority(f"class {d.classes.labels[c]!r} has no records to oversample")
        if counts[c] <= k:
            raise ClassTooSmall(d.classes.labels[c], int(counts[c]), k + 1)
        out[c] = need
    return out


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Floor allocation of ``total`` by ``weights``; residue to the highest weights.

    Zero total weight falls back to uniform weights.
    """
    m = weights.size
    s = weights.sum()
    w = weights / s if s > 0 else np.full(m, 1.0 / m)
    g = np.floor(w * total).astype(np.int64)
    left = total - int(g.sum())
    order = np.lexsort((np.arange(m), -w))  # highest weight first, then lowest index
    while left > 0:
        take = order[:left]
        g[take] += 1
        left -= take.size
    return g


def _interpolate(x: np.ndarray, base: np.ndarray, nn: np.ndarray, per_point: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """For each base point i, ``per_point[i]`` samples x_i + lam * (x_nn - x_i)."""
    src = np.repeat(np.arange(base.size), per_point)
    pick = rng.integers(0, nn.shape[1], size=src.size)
    lam = rng.random(src.size)[:, None]
    xi = x[base[src]]
    xn = x[nn[src, pick]]
    return xi + lam * (xn - xi)


def _oversample(d: Dataset, target, k: int, seed: int, tag: str, adaptive: bool) -> Dataset:
    deficits = _deficits(d, target, k)
    if not deficits:
        return d
    x = np.ascontiguousarray(d.features)
    full_nn = NeighborIndex(x).neighbors(k) if adaptive else None
    xs, ys = [], []
    for c, need in deficits.items():
        rng = np.random.default_rng([seed, c])
        members = np.flatnonzero(d.labels == c)
        if adaptive:
            r = np.mean(d.labels[full_nn[members]] != c, axis=1)
        else:
            r = np.ones(members.size)
        per_point = _allocate(r, need)
        same = NeighborIndex(x[members]).neighbors(k)
        new = _interpolate(x, members, members[same], per_point, rng)
        xs.append(new)
        ys.append(np.full(new.shape[0], c, dtype=np.int64))
    synth = Dataset(d.schema, d.classes, np.vstack(xs), np.concatenate(ys),
                    np.full(sum(len(y) for y in ys), tag, dtype="<U9"))
    return augment(d, synth)


def adasyn(d: Dataset, target: Mapping[int, int] | None = None, k: int = 5, seed: int = 0) -> Dataset:
    """ADASYN: more synthetic points around minority records with other-class neighbors.

    ``target`` maps class index to desired final count (default: balance to
    the majority class).
    """
    target = balance_target(d) if target is None else target
    return _oversample(d, target, k, seed, "adasyn", adaptive=True)


def smote(d: Dataset, target: Mapping[int, int] | None = None, k: int = 5, seed: int = 0,
          tag: str = "smote_enn") -> Dataset:
    target = balance_target(d) if target is None else target
    return _oversample(d, target, k, seed, tag, adaptive=False)


def enn_clean(d: Dataset, k: int = 3) -> Dataset:
    """Edited nearest neighbours: drop records outvoted by another label among their k-NN.

    A record survives when no other label appears more often than its own
    among its neighbours.
    """
    n = len(d)
    if n <= k:
        return d
    nn = NeighborIndex(d.features).neighbors(k)
    votes = np.zeros((n, d.classes.k), dtype=np.int64)
    np.add.at(votes, (np.repeat(np.arange(n), k), d.labels[nn].ravel()), 1)
    own = votes[np.arange(n), d.labels]
    votes[np.arange(n), d.labels] = -1
    keep = own >= votes.max(axis=1)
    return d.subset(np.flatnonzero(keep))


def smote_enn(d: Dataset, target: Mapping[int, int] | None = None, seed: int = 0,
              k_smote: int = 5, k_enn: int = 3) -> Dataset:
    return enn_clean(smote(d, target, k_smote, seed), k_enn)
