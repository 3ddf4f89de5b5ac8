"""Compiled batch simulation kernel.

Reproduces :func:`ksumwalk.model.simulate_path` bit for bit: same
SplitMix64 counters, same probability arithmetic, same comparison.
Each path writes only its own output rows, so results do not depend on
the thread count.
"""

import numba
import numpy as np
from numba import njit, prange, uint64

from .rng import GOLDEN, INV_2_53, MIX1, MIX2

# skip the TBB probe (warns on old TBB builds); results do not depend on the layer
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = uint64(GOLDEN)
_MIX1 = uint64(MIX1)
_MIX2 = uint64(MIX2)


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(parallel=True, cache=True)
def simulate_batch(p, theta, k, n, seed_mixed, path_start, path_count, marks, lil_weights, lil_n0):
    """Simulate ``path_count`` paths starting at global index ``path_start``.

    ``seed_mixed`` is ``mix64(master_seed)``. ``marks`` holds ascending
    times ``m`` at which ``S_m`` and ``M_m`` are recorded. When
    ``lil_weights`` is non-empty, ``max_{lil_n0 <= m <= n} (S_m - m p) *
    lil_weights[m]`` is also returned.

    Returns ``(s_marks, m_marks, sum_s, lil_max)``.
    """
    g = marks.shape[0]
    s_marks = np.empty((path_count, g), dtype=np.int64)
    m_marks = np.empty((path_count, g), dtype=np.float64)
    sum_s = np.empty(path_count, dtype=np.int64)
    lil_max = np.full(path_count, -np.inf)
    want_lil = lil_weights.shape[0] > 0
    base = (1.0 - theta) * p
    for j in prange(path_count):
        key = _mix64(seed_mixed + uint64(path_start + j + 1) * _GOLDEN)
        ring = np.zeros(k, dtype=np.int8)
        head = 0
        length = 0
        wsum = 0
        s = 0
        total = 0
        mart = 0.0
        nxt = 0
        best = -np.inf
        for i in range(1, n + 1):
            if i == 1:
                e = p
            else:
                e = base + theta * wsum / length
            u = float(_mix64(key + uint64(i) * _GOLDEN) >> uint64(11)) * INV_2_53
            x = 1 if u < e else 0
            mart += x - e
            if length < k:
                ring[length] = x
                length += 1
            else:
                wsum -= ring[head]
                ring[head] = x
                head += 1
                if head == k:
                    head = 0
            wsum += x
            s += x
            total += s
            while nxt < g and marks[nxt] == i:
                s_marks[j, nxt] = s
                m_marks[j, nxt] = mart
                nxt += 1
            if want_lil and i >= lil_n0:
                v = (s - i * p) * lil_weights[i]
                if v > best:
                    best = v
        sum_s[j] = total
        lil_max[j] = best
    return s_marks, m_marks, sum_s, lil_max
