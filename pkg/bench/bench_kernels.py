"""Time the numba and numpy variants of each numeric kernel.

    python3 bench/bench_kernels.py [--repeat 5] [--json out.json]

The numba variant is warmed up once before timing so compilation is not
counted. Results are medians over ``--repeat`` runs.
"""

import argparse
import json
import statistics
import time

import numpy as np

from ambiscore import kernels
from ambiscore.ensemble.gbt import fit_gbt_params, flatten_forest
from ambiscore.ensemble.svr import rbf_kernel


def cases(rng):
    x = rng.integers(1, 6, size=20_000).astype(float)
    yield "average_ranks", "n=20000 with ties", (x,)

    X = rng.normal(size=(400, 5))
    y = X[:, 0] - 0.3 * X[:, 1] + 0.1 * rng.normal(size=400)
    yield "smo_svr", "n=400 rbf", (rbf_kernel(X, X, 0.2), y, 10.0, 0.1, 1e-3, 10_000_000)

    Xs = rng.integers(1, 6, size=(5_000, 5)).astype(float)
    r = rng.normal(size=5_000)
    yield "best_split", "5000x5 integer features", (Xs, r, 5, 1e-12)

    Xf = rng.integers(1, 6, size=(600, 5)).astype(float)
    params = fit_gbt_params(Xf, Xf @ rng.normal(size=5), n_trees=200, max_depth=3, learning_rate=0.1, min_leaf=5)
    Xq = rng.integers(1, 6, size=(20_000, 5)).astype(float)
    yield "predict_forest", "200 trees depth 3, 20000 rows", (Xq, *flatten_forest(params))


def timeit(fn, args, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<16}{'case':<32}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, desc, kargs in cases(rng):
        jit = kernels.IMPLEMENTATIONS["numba"][name]
        ref = kernels.IMPLEMENTATIONS["numpy"][name]
        jit(*kargs)  # compile
        a = jit(*kargs)
        b = ref(*kargs)
        first_a = a[0] if isinstance(a, tuple) else a
        first_b = b[0] if isinstance(b, tuple) else b
        agree = bool(np.allclose(first_a, first_b, atol=1e-8))
        t_jit = timeit(jit, kargs, args.repeat)
        t_np = timeit(ref, kargs, args.repeat)
        rows.append({"kernel": name, "case": desc, "numba_s": t_jit, "numpy_s": t_np, "agree": agree})
        print(f"{name:<16}{desc:<32}{t_jit * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_jit:>8.1f}x"
              + ("" if agree else "  MISMATCH"))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
