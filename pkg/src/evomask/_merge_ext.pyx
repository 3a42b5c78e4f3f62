# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled agglomerative merge loop; bit-identical to ``_merge_py``."""
import numpy as np


def merge_loop(const double[:, ::1] sim, bint leaf_average):
    cdef Py_ssize_t n = sim.shape[0]
    cdef Py_ssize_t m = 2 * n - 1
    cdef Py_ssize_t nm = n - 1 if n > 0 else 0
    cache_arr = np.zeros((m, m), dtype=np.float64)
    size_arr = np.ones(m, dtype=np.float64)
    active_arr = np.arange(m, dtype=np.intp)
    merges_arr = np.empty((nm, 2), dtype=np.int64)
    sims_arr = np.empty(nm, dtype=np.float64)
    cdef double[:, ::1] cache = cache_arr
    cdef double[::1] size = size_arr
    cdef Py_ssize_t[::1] active = active_arr
    cdef long long[:, ::1] merges = merges_arr
    cdef double[::1] merge_sims = sims_arr
    cdef Py_ssize_t n_active = n
    cdef Py_ssize_t i, j, k, p, q, a, b, c, w, new
    cdef double best, v, sa, sb, frac

    with nogil:
        for i in range(n):
            for j in range(n):
                cache[i, j] = sim[i, j]
        for k in range(n - 1):
            best = -1.0
            a = -1
            b = -1
            for p in range(n_active):
                i = active[p]
                for q in range(p + 1, n_active):
                    j = active[q]
                    if cache[i, j] > best:
                        best = cache[i, j]
                        a = i
                        b = j
            new = n + k
            merges[k, 0] = a
            merges[k, 1] = b
            merge_sims[k] = best
            frac = size[b] / (size[a] + size[b])
            w = 0
            for p in range(n_active):
                c = active[p]
                if c == a or c == b:
                    continue
                sa = cache[a, c]
                sb = cache[b, c]
                if leaf_average:
                    v = sa + (sb - sa) * frac
                else:
                    v = (sa + sb) * 0.5
                cache[new, c] = v
                cache[c, new] = v
                active[w] = c
                w += 1
            active[w] = new
            n_active = w + 1
            size[new] = size[a] + size[b]
    return merges_arr, sims_arr, cache_arr
