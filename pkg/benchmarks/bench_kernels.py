"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Also checks that both backends return identical results on every input.
"""
import argparse
import timeit

import numpy as np

from botgan import forest as rf
from botgan.dataset import ClassMap, Dataset, FeatureSchema
from botgan.kernels import BACKENDS


def cases(rng):
    x = rng.standard_normal((4000, 20))
    y = rng.integers(0, 6, 4000)
    idx = np.arange(4000, dtype=np.int64)
    feats = np.arange(4, dtype=np.int64)
    d = Dataset(FeatureSchema.proportional(20), ClassMap.generic(6), x, y)
    tree = rf.fit(d, rf.ForestConfig(n_trees=1, seed=0)).trees[0]
    a = np.sort(rng.standard_normal(20000))
    b = np.sort(rng.standard_normal(30000) + 0.1)
    return {
        "best_split n=4000 f=4 k=6": lambda k: k.best_split(x, y, idx, feats, 6, 1),
        f"apply_tree n=4000 nodes={tree.n_nodes}":
            lambda k: k.apply_tree(x, tree.feature, tree.threshold, tree.left, tree.right),
        "ks_statistic 20k vs 30k": lambda k: k.ks_statistic(a, b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in BACKENDS:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s}" + "".join(f"{name:>12s}" for name in BACKENDS) + "   speedup")
    for label, fn in cases(rng).items():
        outs = {name: fn(k) for name, k in BACKENDS.items()}
        ref = outs["python"]
        for name, out in outs.items():
            same = np.array_equal(np.asarray(out), np.asarray(ref)) if isinstance(out, np.ndarray) else out == ref
            if not same:
                raise SystemExit(f"{label}: {name} disagrees with python backend")
        times = {name: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                 for name, k in BACKENDS.items()}
        row = "".join(f"{times[n] * 1e3:10.2f}ms" for n in BACKENDS)
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{label:40s}{row}{speed}")


if __name__ == "__main__":
    main()
