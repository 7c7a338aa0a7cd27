"""
Seedable random streams.

A stream is keyed by (seed, stream_id) on a counter-based Philox generator,
so the value sequence is identical on every platform and distinct stream ids
give independent sequences. All randomness in the package flows through
explicit RandomStream values.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(*parts: int | str) -> int:
    """Fold labels and indices into one 64-bit stream id."""
    words = [zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & _MASK64 for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


class RandomStream:
    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._generator = np.random.Generator(np.random.Philox(key=(self.seed << 64) | self.stream_id))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    @property
    def counter(self) -> int:
        return int(self._generator.bit_generator.state["state"]["counter"][0])

    def derive(self, *parts: int | str) -> "RandomStream":
        """Child stream for a named purpose (fold index, tensor name, ...)."""
        return RandomStream(self.seed, stream_key(self.stream_id, *parts))

    def random(self, size=None) -> np.ndarray:
        return self._generator.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def normal(self, size=None) -> np.ndarray:
        return self._generator.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, count: int) -> np.ndarray:
        """`count` distinct indices from range(n), sorted."""
        return np.sort(self._generator.choice(n, size=count, replace=False))

    def bytes(self, length: int) -> bytes:
        return self._generator.bytes(length)
