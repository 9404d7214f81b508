"""Counter-based random number generation.

All randomness in the package flows through a single documented stream so
that a seed reproduces identical values on any platform (and in any language
that reimplements the stream). The draw with index ``k`` for seed ``s`` is

    value_k = splitmix64_finalize(s + (k + 1) * 0x9E3779B97F4A7C15)  (mod 2^64)

i.e. the standard SplitMix64 sequence. Uniform doubles take the top 53 bits,
giving values in [0, 1).
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def raw_stream(seed: int, start: int, count: int) -> np.ndarray:
    """uint64 draws with indices start..start+count-1 of the seed's stream."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    return _finalize(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * GOLDEN)


def uniform(seed: int, count: int, *, start: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1), one per stream index."""
    return (raw_stream(seed, start, count) >> np.uint64(11)) * 2.0**-53


def symmetric_uniform(seed: int, count: int, amplitude: float) -> np.ndarray:
    """Uniform doubles in [-amplitude, amplitude)."""
    return amplitude * (2.0 * uniform(seed, count) - 1.0)


def derive_seed(seed: int, label: int) -> int:
    """A decorrelated child seed; used to give sub-streams their own seeds."""
    return int(raw_stream(seed, label + 0x5EED, 1)[0])


def permutation(seed: int, n: int) -> np.ndarray:
    """Deterministic Fisher-Yates permutation of range(n) driven by the stream."""
    draws = uniform(seed, max(n - 1, 0))
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(draws[n - 1 - i] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
