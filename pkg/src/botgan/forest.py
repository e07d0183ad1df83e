"""CART decision trees and a bagged random forest (Gini impurity).

Split search runs in :mod:`botgan.kernels`; tree growth, bootstrap and
voting live here.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import EmptyHistogram, EmptyTrain, SingleClass, WidthMismatch


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if counts.size == 0 or total <= 0 or np.any(counts < 0):
        raise EmptyHistogram("gini needs a non-negative histogram with positive total")
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: object = "sqrt"  # "sqrt", "all", or an int
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        mf = self.max_features
        if not (mf in ("sqrt", "all") or (isinstance(mf, int) and mf >= 1)):
            raise ValueError(f"max_features must be 'sqrt', 'all' or a positive int, got {mf!r}")

    def n_candidate_features(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.isqrt(d))
        if self.max_features == "all":
            return d
        return min(int(self.max_features), d)


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf. ``value`` holds class counts."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return kernels.apply_tree(x, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        v = self.value[self.apply(x)].astype(np.float64)
        return v / v.sum(axis=1, keepdims=True)


def _improves(sl: int, sr: int, nl: int, n: int, parent_sq: int) -> bool:
    # exact integer test of  sl/nl + sr/nr > parent_sq/n
    nr = n - nl
    return n * (sl * nr + sr * nl) > parent_sq * nl * nr


def grow_tree(x: np.ndarray, y: np.ndarray, rows: np.ndarray, n_classes: int,
              cfg: ForestConfig, rng: np.random.Generator) -> DecisionTree:
    """Grow one tree on ``x[rows]`` (``rows`` may repeat, e.g. a bootstrap draw)."""
    d = x.shape[1]
    mf = cfg.n_candidate_features(d)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(counts):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts)
        return len(feature) - 1

    root_counts = np.bincount(y[rows], minlength=n_classes)
    stack = [(new_node(root_counts), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        n = idx.shape[0]
        if (np.count_nonzero(counts) <= 1 or n < 2 * cfg.min_samples_leaf
                or (cfg.max_depth is not None and depth >= cfg.max_depth)):
            continue
        if mf == d:
            feats = np.arange(d, dtype=np.int64)
        else:
            feats = np.sort(rng.choice(d, size=mf, replace=False)).astype(np.int64)
        f, thr, _, sl, sr, nl = kernels.best_split(x, y, idx, feats, n_classes, cfg.min_samples_leaf)
        parent_sq = int(np.dot(counts, counts))
        if f < 0 or not _improves(sl, sr, nl, n, parent_sq):
            continue
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        ln = new_node(np.bincount(y[li], minlength=n_classes))
        rn = new_node(np.bincount(y[ri], minlength=n_classes))
        left[node], right[node] = ln, rn
        # right pushed first so the left subtree is numbered first
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(value, dtype=np.int64).reshape(-1, n_classes))


@dataclass
class Forest:
    trees: list
    n_classes: int
    n_features: int
    config: ForestConfig

    def predict_proba(self, x) -> np.ndarray:
        return predict_proba(self, x)

    def predict(self, x) -> np.ndarray:
        return predict(self, x)


def _xy(data) -> tuple[np.ndarray, np.ndarray]:
    return (np.ascontiguousarray(data.features, dtype=np.float64),
            np.ascontiguousarray(data.labels, dtype=np.int64))


def fit(train: Dataset, cfg: ForestConfig = ForestConfig()) -> Forest:
    x, y = _xy(train)
    n = x.shape[0]
    if n == 0:
        raise EmptyTrain("cannot fit a forest on an empty dataset")
    if np.unique(y).size < 2:
        raise SingleClass("need at least two classes to fit a forest")
    k = train.classes.k
    tree_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = []
    for ss in tree_seeds:
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        trees.append(grow_tree(x, y, rows.astype(np.int64), k, cfg, rng))
    return Forest(trees, k, x.shape[1], cfg)


def _features_of(f: Forest, x) -> np.ndarray:
    x = x.features if isinstance(x, Dataset) else x
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != f.n_features:
        raise WidthMismatch(None, f.n_features, x.shape[-1])
    return x


def predict_proba(f: Forest, x) -> np.ndarray:
    x = _features_of(f, x)
    out = np.zeros((x.shape[0], f.n_classes))
    for tree in f.trees:
        out += tree.predict_proba(x)
    return out / len(f.trees)


def predict(f: Forest, x) -> np.ndarray:
    # np.argmax ties to the lowest class index
    return np.argmax(predict_proba(f, x), axis=1)


# --- persistence -------------------------------------------------------------

def forest_arrays(f: Forest) -> tuple[dict, dict]:
    arrays = {}
    for i, t in enumerate(f.trees):
        for name in ("feature", "threshold", "left", "right", "value"):
            arrays[f"tree{i}/{name}"] = getattr(t, name)
    cfg = asdict(f.config)
    meta = {"kind": "forest", "n_trees": len(f.trees), "n_classes": f.n_classes,
            "n_features": f.n_features, "config": cfg}
    return arrays, meta


def forest_from_arrays(arrays: dict, meta: dict) -> Forest:
    trees = [DecisionTree(*(arrays[f"tree{i}/{name}"]
                            for name in ("feature", "threshold", "left", "right", "value")))
             for i in range(meta["n_trees"])]
    return Forest(trees, meta["n_classes"], meta["n_features"], ForestConfig(**meta["config"]))
