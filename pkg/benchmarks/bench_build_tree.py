"""Time the merge loop on each available backend.

    python3 benchmarks/bench_build_tree.py [--sizes 64 196] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from evomask._kernel import BACKENDS
from evomask.hierarchy import CHILDREN_AVERAGE, LEAF_AVERAGE


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 196])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'n':>5} {'linkage':>16} " + " ".join(f"{name:>12}" for name in BACKENDS))
    for n in args.sizes:
        a = rng.random((n, n))
        sim = (a + a.T) / 2
        for linkage in (CHILDREN_AVERAGE, LEAF_AVERAGE):
            leaf = linkage == LEAF_AVERAGE
            results = {name: fn(sim, leaf) for name, fn in BACKENDS.items()}
            ref = next(iter(results.values()))
            assert all(np.array_equal(r[0], ref[0]) for r in results.values()), "backends disagree"
            times = [
                min(timeit.repeat(lambda fn=fn: fn(sim, leaf), number=1, repeat=args.repeat))
                for fn in BACKENDS.values()
            ]
            print(f"{n:>5} {linkage:>16} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times))


if __name__ == "__main__":
    main()
