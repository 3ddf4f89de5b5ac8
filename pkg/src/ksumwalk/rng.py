"""Counter-based random streams.

Every simulated path owns an independent SplitMix64 stream whose key is a
pure function of ``(master_seed, path_index)``:

    key   = mix64(mix64(master_seed) + (path_index + 1) * GOLDEN)
    u_i   = (mix64(key + i * GOLDEN) >> 11) * 2**-53,   i = 1, 2, ...

Because ``u_i`` is computed from the counter ``i`` rather than from a
mutable state, a path's uniforms do not depend on which worker draws them
or in what order. The numba kernels in :mod:`ksumwalk._kernels` implement
the same arithmetic bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (taken modulo 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def path_key(master_seed: int, path_index: int) -> int:
    return mix64(mix64(master_seed) + (path_index + 1) * GOLDEN)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class PathStream:
    """Random-stream handle for one path.

    ``uniforms(count, start)`` returns the uniforms for counters
    ``start, start + 1, ...``; the first trial of a path consumes counter 1.
    """

    master_seed: int
    path_index: int = 0

    @property
    def key(self) -> int:
        return path_key(self.master_seed, self.path_index)

    def uniforms(self, count: int, start: int = 1) -> np.ndarray:
        counters = np.arange(start, start + count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + counters * np.uint64(GOLDEN)
            bits = _mix64_array(z)
        return (bits >> np.uint64(11)).astype(np.float64) * INV_2_53

    def uniform(self, counter: int) -> float:
        return (mix64(self.key + counter * GOLDEN) >> 11) * INV_2_53
