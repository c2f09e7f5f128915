"""Deterministic random streams for simulation.

Patient trajectories use a counter-based generator: a 64-bit key is
derived from a path such as ``(seed, scenario, replication, basket,
patient)`` and the k-th uniform for that key is a SplitMix64 hash of
``key + (k + 1) * golden``.  Any patient can be regenerated on its own,
and array code and the compiled kernel produce identical numbers.

MCMC samplers get an ordinary numpy ``Generator`` seeded from a path.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "GOLDEN",
    "mix64",
    "derive_key",
    "child_keys",
    "uniforms",
    "sampler_generator",
]

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TO_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def _step(key: int, part: int) -> int:
    return mix64(((key ^ mix64(part + GOLDEN)) + GOLDEN) & MASK)


def derive_key(seed: int, *path: int) -> int:
    """Key for the stream at ``path`` below ``seed``; all parts are ints >= 0."""
    key = mix64(int(seed))
    for part in path:
        key = _step(key, int(part))
    return key


def child_keys(key: int, indices) -> np.ndarray:
    """Vectorised ``derive_key`` step: keys for children ``indices`` of ``key``."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64_np(idx + np.uint64(GOLDEN))
        return _mix64_np((np.uint64(key) ^ h) + np.uint64(GOLDEN))


def uniforms(keys, counters) -> np.ndarray:
    """Uniforms in [0, 1) for every (key, counter) pair; result shape is keys x counters."""
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1, 1)
    ctr = (np.asarray(counters, dtype=np.uint64).reshape(1, -1) + np.uint64(1))
    with np.errstate(over="ignore"):
        z = _mix64_np(keys + ctr * np.uint64(GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def sampler_generator(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, path)])))
