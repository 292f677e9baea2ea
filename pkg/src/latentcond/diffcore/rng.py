"""Counter-based random streams (Philox) with deterministic splitting."""
from __future__ import annotations

import numpy as np


class RngStream:
    """A seeded Philox stream.

    ``split(n)`` derives ``n`` child streams from the seed sequence; children
    have distinct Philox keys, so their counters never collide.  The parent
    keeps drawing from its own key, unaffected by splitting.
    """

    def __init__(self, seed=0):
        self.seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.bitgen = np.random.Philox(self.seed_seq)
        self.gen = np.random.Generator(self.bitgen)

    def split(self, n: int) -> list["RngStream"]:
        return [RngStream(s) for s in self.seed_seq.spawn(n)]

    def clone(self) -> "RngStream":
        twin = RngStream.__new__(RngStream)
        twin.seed_seq = self.seed_seq
        twin.bitgen = np.random.Philox(self.seed_seq)
        twin.bitgen.state = self.bitgen.state
        twin.gen = np.random.Generator(twin.bitgen)
        return twin

    def normal(self, size=None, loc=0.0, scale=1.0):
        return self.gen.normal(loc, scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def raw(self, n: int) -> np.ndarray:
        """Raw 64-bit outputs, for stream-disjointness checks."""
        return self.bitgen.random_raw(n)


class ZeroNoise(RngStream):
    """Test hook: a stream whose Gaussian draws are identically zero."""

    def __init__(self):
        super().__init__(0)

    def normal(self, size=None, loc=0.0, scale=1.0):
        return np.zeros(size) + loc if size is not None else float(loc)
