"""Seeded uniform streams.

One root seed fans out into independent per-session streams through
numpy's SeedSequence, so `--count K` output does not depend on how the
sessions are scheduled.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "numpy.PCG64+SeedSequence"
_BLOCK = 1024
# spawn-key tag of the side stream that draws label permutations
_LABEL_TAG = 0x6C61626C


class UniformStream:
    """Uniforms in [0, 1), drawn in blocks and counted one by one."""

    def __init__(self, seed=None, spawn_key: tuple = ()):
        self.seed_seq = np.random.SeedSequence(seed, spawn_key=spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(self.seed_seq))
        self._buf = np.empty(0)
        self._pos = 0
        self.consumed = 0
        self._labels = None

    @property
    def entropy(self):
        return self.seed_seq.entropy

    def uniform(self) -> float:
        if self._pos == self._buf.size:
            self._buf = self.gen.random(_BLOCK)
            self._pos = 0
        u = float(self._buf[self._pos])
        self._pos += 1
        self.consumed += 1
        return u

    def peek(self, n: int) -> np.ndarray:
        """The next n uniforms, without consuming them."""
        avail = self._buf.size - self._pos
        if avail < n:
            extra = -(-(n - avail) // _BLOCK) * _BLOCK
            self._buf = np.concatenate([self._buf[self._pos:], self.gen.random(extra)])
            self._pos = 0
        return self._buf[self._pos:self._pos + n]

    def advance(self, n: int) -> None:
        """Consume n uniforms previously returned by :meth:`peek`."""
        if self._pos + n > self._buf.size:
            raise ValueError("advance past the peeked uniforms")
        self._pos += n
        self.consumed += n

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) from a single uniform."""
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        # from a side generator, so labels neither count as sampling cost
        # nor depend on how far the uniforms have been buffered
        if self._labels is None:
            ss = np.random.SeedSequence(self.seed_seq.entropy, spawn_key=self.seed_seq.spawn_key + (_LABEL_TAG,))
            self._labels = np.random.Generator(np.random.PCG64(ss))
        return self._labels.permutation(n)

    def spawn(self, n: int) -> list["UniformStream"]:
        return [UniformStream(self.seed_seq.entropy, self.seed_seq.spawn_key + (i,)) for i in range(n)]


def session_streams(seed, count: int) -> list[UniformStream]:
    """Independent streams for sessions 0..count-1 derived from one seed."""
    return UniformStream(seed).spawn(count)
