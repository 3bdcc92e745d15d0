"""Keyed, counter-based random streams.

Every stream is a Philox generator whose 128-bit key is ``(seed, stream_id)``,
so a stream is fully determined by those two integers regardless of how many
other streams exist or in which order they are consumed.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    The wrapped :class:`numpy.random.Generator` is exposed as ``generator``; it
    can be handed to numba kernels, which then advance the same state.
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.generator = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    @classmethod
    def for_replica(cls, seed: int, replica: int, purpose: int = 0) -> "RngStream":
        # replica j owns stream ids j * 2^32 + purpose
        return cls(seed, (int(replica) << 32) + int(purpose))

    def spawn(self, key: int) -> "RngStream":
        """Child stream derived by hashing ``(seed, stream_id, key)``."""
        ss = np.random.SeedSequence(entropy=[self.seed, self.stream_id], spawn_key=(int(key),))
        child = int(ss.generate_state(1, dtype=np.uint64)[0])
        return RngStream(self.seed, child)

    # thin conveniences used by the pure-python parts of the package
    def random(self) -> float:
        return float(self.generator.random())

    def integers(self, low: int, high: int | None = None) -> int:
        return int(self.generator.integers(low, high))

    def bernoulli(self, p: float) -> bool:
        return bool(self.generator.random() < p)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_stream(rng: RngStream | int | None) -> RngStream:
    """Accept a stream, a bare seed, or None (seed 0)."""
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))
