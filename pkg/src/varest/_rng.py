"""Counter-based uniform generator.

Each uniform is a pure function of ``(seed, replicate, position)``: a SplitMix64
finalizer applied to a Weyl-sequence counter. Nothing is carried between calls,
so any subset of replicates can be generated in any order, on any number of
workers, and the bits come out the same on every platform with 64-bit unsigned
wraparound arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, replicates: np.ndarray, width: int) -> np.ndarray:
    """Return a ``(len(replicates), width)`` array of uniforms on [0, 1).

    Row ``i`` depends only on ``seed`` and ``replicates[i]``.
    """
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    reps = np.asarray(replicates, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(1, width + 1, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed], dtype=np.uint64) * _GOLDEN + _STREAM)
        stream = _mix(key + (reps + np.uint64(1)) * _STREAM)
        bits = _mix(stream + cols * _GOLDEN)
    # top 53 bits -> exactly representable double in [0, 1)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
