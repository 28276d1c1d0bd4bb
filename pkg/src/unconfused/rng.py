"""Deterministic random streams.

All randomness in the package flows through explicit (seed, stream) pairs
backed by the counter-based Philox bit generator, which produces the same
output on every platform.  Sub-streams are derived by folding integer or
string tags into the stream id with a splitmix-style mixer, so every
consumer (data
generation, corruption, shuffling, selection) owns an independent,
individually replayable stream.  Platform-default or global RNG state is
never used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """splitmix64 finalizer: spreads 64-bit ints over the full range."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """A named, replayable random stream.

    ``generator()`` builds a fresh NumPy generator on each call, so a
    function handed an RngStream draws the identical sequence no matter how
    many times it runs.  Identical (seed, stream) pairs give identical draws
    across platforms and processes.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 <= int(self.stream) <= _MASK64:
            raise ValueError("stream must be an unsigned 64-bit integer")

    def child(self, *tags) -> "RngStream":
        """Derive a sub-stream by mixing tags into the stream id.

        Tags are integers or strings; strings fold their UTF-8 bytes (plus
        length, so prefixes differ) through the same mixer, keeping the
        derivation platform-independent.
        """
        s = int(self.stream)
        for tag in tags:
            if isinstance(tag, str):
                data = tag.encode("utf-8")
                pieces = [len(data)]
                pieces.extend(int.from_bytes(data[i:i + 8], "little")
                              for i in range(0, len(data), 8))
            else:
                pieces = [int(tag) & _MASK64]
            for piece in pieces:
                s = mix64((s ^ mix64(piece & _MASK64)) & _MASK64)
        return RngStream(self.seed, s)

    def generator(self) -> np.random.Generator:
        key = np.array([int(self.seed), int(self.stream)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def kernel_seed(self) -> int:
        """A 32-bit seed for compiled kernels that keep their own RNG state."""
        return int(self.generator().integers(0, 2**32, dtype=np.uint64))
