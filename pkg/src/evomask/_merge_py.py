"""NumPy fallback for the agglomerative merge loop.

Must stay bit-identical to ``_merge_ext.pyx``: same scan order, same update
expressions, same operand order.
"""
from __future__ import annotations

import numpy as np


def merge_loop(sim: np.ndarray, leaf_average: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy max-similarity merging over ``sim`` (float64, symmetric).

    Returns ``(merges, merge_sims, cache)``: ``merges[k]`` holds the two child
    ids of node ``n + k`` (smaller id first), ``merge_sims[k]`` the similarity
    they were merged at, and ``cache`` the ``(2n-1, 2n-1)`` matrix of every
    node-pair similarity the loop computed (zero where never computed).
    """
    n = sim.shape[0]
    m = 2 * n - 1
    cache = np.zeros((m, m), dtype=np.float64)
    cache[:n, :n] = sim
    size = np.ones(m, dtype=np.float64)
    active = np.arange(n)
    merges = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    merge_sims = np.empty(max(n - 1, 0), dtype=np.float64)
    for k in range(n - 1):
        sub = cache[np.ix_(active, active)]
        # strict upper triangle only; -1 is below every nonnegative similarity
        sub = np.where(np.triu(np.ones(sub.shape, dtype=bool), 1), sub, -1.0)
        flat = int(np.argmax(sub))
        p, q = divmod(flat, active.shape[0])
        a, b = int(active[p]), int(active[q])
        new = n + k
        merges[k] = a, b
        merge_sims[k] = cache[a, b]
        rest = active[(active != a) & (active != b)]
        sa = cache[a, rest]
        sb = cache[b, rest]
        if leaf_average:
            frac = size[b] / (size[a] + size[b])
            v = sa + (sb - sa) * frac
        else:
            v = (sa + sb) * 0.5
        cache[new, rest] = v
        cache[rest, new] = v
        size[new] = size[a] + size[b]
        active = np.append(rest, new)
    return merges, merge_sims, cache
