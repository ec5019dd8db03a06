"""Seeded random streams.

Backed by numpy's Philox counter-based bit generator, whose raw stream is
stable across platforms. Child streams are derived through ``SeedSequence``
spawn keys so that independent consumers never share draws.
"""
import numpy as np


class Rng:
    """A seeded, counter-based random stream.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed.
    stream : tuple of int, optional
        Spawn key identifying a child stream of ``seed``.
    """

    def __init__(self, seed, stream=()):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=self.stream)
        self._bitgen = np.random.Philox(ss)
        self._gen = np.random.Generator(self._bitgen)

    def child(self, key):
        """Return an independent stream derived from this one's seed."""
        return Rng(self.seed, self.stream + (int(key),))

    @property
    def position(self):
        """Philox counter (4 x uint64), i.e. the stream position."""
        return tuple(int(c) for c in self._bitgen.state["state"]["counter"])

    def uniform(self, size=None, low=0.0, high=1.0):
        if low == 0.0 and high == 1.0:
            return self._gen.random(size)
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, loc=0.0, scale=1.0):
        return self._gen.normal(loc, scale, size)

    def exponential(self, size=None, scale=1.0):
        return self._gen.exponential(scale, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"
