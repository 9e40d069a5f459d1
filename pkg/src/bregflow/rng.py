"""
Counter-based random streams for deterministic replay.

Every draw made by a flow is addressed by ``(seed, step, purpose)``: the
seed is the Philox key, and the step and purpose occupy the high words of
the 256-bit counter.  Within one call particle ``i`` always receives the
``i``-th block of draws, so a trajectory can be replayed, or a single step
recomputed, without running the steps before it.
"""

from __future__ import annotations

import enum

import numpy as np


class Purpose(enum.IntEnum):
    INIT = 0
    LANGEVIN = 1
    METROPOLIS = 2
    RESAMPLE = 3


_MASK64 = (1 << 64) - 1


def _key(seed: int) -> np.ndarray:
    return np.array([seed & _MASK64, (seed >> 64) & _MASK64], dtype=np.uint64)


def stream(seed: int, step: int, purpose: Purpose) -> np.random.Generator:
    if seed < 0 or step < 0:
        raise ValueError("seed and step must be non-negative")
    counter = np.array([0, 0, int(purpose), step], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(seed), counter=counter))


class Streams:
    """Reusable generator for long loops; ``at`` yields the same draws as :func:`stream`.

    Re-addressing one Philox instance is several times cheaper than
    building a new generator per step.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self._key = _key(seed)
        self._bits = np.random.Philox(key=self._key)
        self._gen = np.random.Generator(self._bits)

    def at(self, step: int, purpose: Purpose) -> np.random.Generator:
        if step < 0:
            raise ValueError("step must be non-negative")
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array([0, 0, int(purpose), step], dtype=np.uint64),
                "key": self._key,
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def normals(seed: int, step: int, shape, purpose: Purpose = Purpose.LANGEVIN) -> np.ndarray:
    return stream(seed, step, purpose).standard_normal(shape)


def uniforms(seed: int, step: int, size, purpose: Purpose) -> np.ndarray:
    return stream(seed, step, purpose).random(size)
