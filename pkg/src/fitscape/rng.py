"""Deterministic random streams for simulations.

Every simulation instance owns a counter-based Philox (4x64) stream.
Stream keys are derived from ``(seed, stream index)`` through a
splitmix64-style 64-bit avalanche, so replicates are decorrelated yet
fully reproducible from the pair alone, on any platform.

The compiled kernel consumes raw ``next_double`` values straight from the
bit generator; the pure-Python kernel consumes the same stream through a
buffered reader.  numpy fills float64 blocks with exactly the sequence of
``next_double`` calls, so the two backends see identical draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, the splitmix64 increment


def avalanche64(x: int) -> int:
    """splitmix64 finalizer: a full-avalanche 64-bit mix."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream_key(seed: int, stream: int = 0) -> tuple[int, int]:
    """128-bit Philox key for the given stream of a 64-bit seed.

    ``stream`` is the replicate index.  The map is injective in the
    stream index (odd multiplier mod 2^64), so distinct replicates can
    never share a key for a fixed seed.
    """
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must fit in 64 bits")
    if stream < 0:
        raise ValueError("stream index must be nonnegative")
    s = (seed + (stream + 1) * _GOLDEN) & _MASK64
    return avalanche64(s), avalanche64((s + _GOLDEN) & _MASK64)


def make_bitgen(key: tuple[int, int]) -> np.random.Philox:
    """Philox bit generator for a derived stream key."""
    return np.random.Philox(key=np.array(key, dtype=np.uint64))


class UniformSource:
    """Buffered float64 view of a bit generator's stream.

    Reading n floats here yields exactly the values of n raw
    ``next_double`` calls on the same generator state, so buffered and
    unbuffered consumers can replay one another's trajectories.
    """

    _BUF = 4096

    def __init__(self, key: tuple[int, int]):
        self._gen = np.random.Generator(make_bitgen(key))
        self._buf: list[float] = []
        self._pos = 0

    def __call__(self) -> float:
        pos = self._pos
        if pos == len(self._buf):
            self._buf = self._gen.random(self._BUF).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]
