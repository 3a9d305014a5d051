"""Keyed random streams: the same (seed, stream id) always yields the same draws."""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, index: int) -> int:
    return splitmix64((seed & _MASK64) ^ splitmix64(index & _MASK64))


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    raise TypeError(f"stream id parts must be int or str, got {type(part).__name__}")


class RngStream:
    """A numpy Generator addressed by ``(seed, *stream_id)``.

    Stream ids are things like ``("client", 3, "round", 7, "shuffle")``; the
    draw sequence depends only on the key, never on the order in which
    streams are created.
    """

    def __init__(self, seed: int, *stream_id):
        self.seed = int(seed)
        self.stream_id = tuple(stream_id)
        words = [_key(self.seed)] + [_key(p) for p in self.stream_id]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

    def child(self, *more) -> "RngStream":
        return RngStream(self.seed, *self.stream_id, *more)

    def random(self, size=None):
        return self._gen.random(size, dtype=np.float64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __getattr__(self, name):
        return getattr(self._gen, name)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
