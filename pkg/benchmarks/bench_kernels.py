"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend, the speedup, and the
largest absolute difference between backend outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sexismkit import kernels
from sexismkit.ensemble import all_masks


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    cands = rng.normal(size=(2000, 384))
    anchors = rng.normal(size=(300, 384))
    yield "mean_cosine 2000x300 d=384", lambda b: kernels.mean_cosine(cands, anchors, backend=b)
    for m, n, k in ((8, 1000, 4), (12, 1000, 2), (12, 500, 11)):
        probs = rng.dirichlet(np.ones(k), size=(m, n))
        gold = rng.integers(k, size=n)
        masks = all_masks(m)
        for hard in (False, True):
            label = f"score_subsets M={m} N={n} K={k} {'hard' if hard else 'soft'}"
            yield label, (lambda b, p=probs, g=gold, s=masks, h=hard: kernels.score_subsets(p, g, s, hard=h, backend=b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = list(kernels.available_backends())
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    if len(backends) < 2:
        print("compiled extension not built; only the python backend is timed")
    header = f"{'kernel':<40}" + "".join(f"{b + ' [s]':>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'max |diff|':>13}"
    print(header)
    for label, fn in cases(np.random.default_rng(args.seed)):
        times, outs = [], []
        for b in backends:
            outs.append(fn(b))
            times.append(best_of(lambda: fn(b), args.repeat))
        line = f"{label:<40}" + "".join(f"{t:>12.4f}" for t in times)
        if len(backends) == 2:
            i_c, i_p = backends.index("cython"), backends.index("python")
            diff = float(np.max(np.abs(np.asarray(outs[i_c]) - np.asarray(outs[i_p]))))
            line += f"{times[i_p] / times[i_c]:>9.1f}x{diff:>13.2e}"
        print(line)


if __name__ == "__main__":
    main()
