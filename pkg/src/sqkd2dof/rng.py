"""Seedable counter-based random substreams.

Every random draw in the simulator comes from a ``RandomSource``: a Philox
counter-based generator keyed by ``(seed, stream)``.  Distinct stream ids give
statistically independent sequences, and a given ``(seed, stream)`` pair always
produces the same sequence, so results never depend on execution order or
worker count.

Hot loops use :meth:`RandomSource.uniforms` to pull a prefix of the stream in
one call and then index it by round number; stepwise consumers use
:meth:`RandomSource.generator`.
"""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1


class RandomSource:
    """A deterministic substream identified by ``(seed, stream)``."""

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        self._gen: np.random.Generator | None = None

    def generator(self) -> np.random.Generator:
        """Stateful generator for this substream (created once, then reused)."""
        if self._gen is None:
            self._gen = np.random.Generator(self._bit_generator())
        return self._gen

    def uniforms(self, n: int) -> np.ndarray:
        """First ``n`` uniform [0, 1) values of this substream.

        Stateless: repeated calls return the same prefix, independent of any
        draws made through :meth:`generator`.
        """
        fresh = np.random.Generator(self._bit_generator())
        return fresh.random(n)

    def substream(self, stream: int) -> "RandomSource":
        """Sibling source with the same seed and a different stream id."""
        return RandomSource(self.seed, stream)

    def _bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream={self.stream})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RandomSource):
            return NotImplemented
        return self.seed == other.seed and self.stream == other.stream

    def __hash__(self) -> int:
        return hash((self.seed, self.stream))
