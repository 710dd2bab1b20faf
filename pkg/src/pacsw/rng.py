"""Counter-based random streams.

A :class:`Stream` is a Philox key derived from ``(seed, tag)``. Draw ``j`` of a
stream gets its own generator whose counter starts at block ``j << 128``, so the
numbers used for item ``j`` never depend on how many other items were drawn or
in which order. This is what makes slice sampling bit-reproducible for any
number of workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Stream:
    seed: int = 0
    tag: tuple[int, ...] = ()
    _key: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(t) for t in self.tag))
        object.__setattr__(self, "_key", ss.generate_state(2, dtype=np.uint64))

    def child(self, *tag: int) -> "Stream":
        return Stream(self.seed, self.tag + tuple(int(t) for t in tag))

    def generator(self, index: int = 0) -> np.random.Generator:
        if index < 0 or index >= 2**64:
            raise ValueError("stream index out of range")
        bitgen = np.random.Philox(counter=[0, 0, int(index), 0], key=self._key)
        return np.random.Generator(bitgen)

    def derive_seed(self) -> int:
        """A 63-bit integer seed unique to this stream, for seed-taking APIs."""
        return int(self._key[0] >> np.uint64(1))

    def generators(self, count: int):
        """Yield generators ``0 .. count-1`` by rewinding one bit generator.

        Each yielded generator is only valid until the next one is requested.
        Produces the same numbers as calling :meth:`generator` per index.
        """
        bitgen = np.random.Philox(counter=[0, 0, 0, 0], key=self._key)
        gen = np.random.Generator(bitgen)
        state = bitgen.state
        for j in range(count):
            state["state"]["counter"] = np.array([0, 0, j, 0], dtype=np.uint64)
            state["buffer_pos"] = 4
            state["has_uint32"] = 0
            state["uinteger"] = 0
            bitgen.state = state
            yield gen


def as_stream(seed) -> Stream:
    """Accept a Stream, an int seed or None (seed 0)."""
    if isinstance(seed, Stream):
        return seed
    if seed is None:
        return Stream(0)
    if isinstance(seed, (int, np.integer)):
        return Stream(int(seed))
    raise TypeError(f"cannot build a Stream from {type(seed).__name__}")
