"""Counter-based splitmix64 random streams.

Every draw is a pure function of ``(key, counter)``::

    key      = mix64(mix64(seed) ^ stream_id)
    word_i   = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)       (mod 2**64)
    uniform  = (word >> 11) * 2**-53                            in [0, 1)

which is exactly the splitmix64 sequence seeded with ``key``.  Normals use
Box-Muller on consecutive word pairs ``(u1, u2)`` with ``u1`` mapped to
``(0, 1]``: the pair yields ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``,
``r = sqrt(-2 ln u1)``.  String stream ids are hashed with 64-bit FNV-1a.
Any language with wrapping 64-bit integer arithmetic reproduces the streams.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


def mix64_int(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_id(stream) -> int:
    if isinstance(stream, (int, np.integer)):
        return int(stream) & MASK
    h = 0xCBF29CE484222325
    for byte in str(stream).encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK
    return h


def derive_key(seed: int, stream=0) -> int:
    return mix64_int(mix64_int(int(seed)) ^ stream_id(stream))


def _words(keys: np.ndarray, start: int, n: int) -> np.ndarray:
    """``[len(keys), n]`` block of splitmix64 outputs at counters start..start+n-1."""
    counters = (np.arange(n, dtype=np.uint64) + np.uint64(start + 1)) * np.uint64(GOLDEN)
    with np.errstate(over="ignore"):
        return _mix64(keys[:, None] + counters[None, :])


def _to_uniform(words: np.ndarray) -> np.ndarray:
    return (words >> np.uint64(11)).astype(np.float64) * _TWO_M53


def _to_normal(words: np.ndarray, n: int) -> np.ndarray:
    u1 = 1.0 - _to_uniform(words[:, 0::2])
    u2 = _to_uniform(words[:, 1::2])
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty((words.shape[0], 2 * u1.shape[1]))
    out[:, 0::2] = r * np.cos(theta)
    out[:, 1::2] = r * np.sin(theta)
    return out[:, :n]


class BatchGenerator:
    """Several independent streams advanced in lockstep.

    Row ``i`` of every draw comes from the stream keyed ``keys[i]``, so a
    scene's noise never depends on which other scenes share the batch.
    """

    def __init__(self, keys):
        # fromiter keeps all 64 bits; np.array on a mixed int list goes through float64
        flat = [int(k) & MASK for k in np.ravel(np.asarray(keys, dtype=object))]
        self.keys = np.fromiter(flat, dtype=np.uint64, count=len(flat))
        self.counter = 0

    def _take(self, n: int) -> np.ndarray:
        words = _words(self.keys, self.counter, n)
        self.counter += n
        return words

    def random(self, shape=()) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = int(np.prod(shape)) if shape else 1
        return _to_uniform(self._take(n)).reshape((len(self.keys),) + shape)

    def normal(self, shape=()) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = int(np.prod(shape)) if shape else 1
        words = self._take(n + (n % 2))
        return _to_normal(words, n).reshape((len(self.keys),) + shape)


class Generator:
    """A single splitmix64 stream with numpy-like draw methods."""

    def __init__(self, seed: int = 0, stream=0):
        self.seed = int(seed)
        self.key = derive_key(seed, stream)
        self._batch = BatchGenerator([self.key])

    @classmethod
    def from_key(cls, key: int) -> "Generator":
        g = cls.__new__(cls)
        g.seed = None
        g.key = int(key) & MASK
        g._batch = BatchGenerator([g.key])
        return g

    @property
    def counter(self) -> int:
        return self._batch.counter

    def spawn(self, stream) -> "Generator":
        """Child stream whose key depends only on this key and ``stream``."""
        return Generator.from_key(mix64_int(self.key ^ mix64_int(stream_id(stream))))

    def random(self, shape=()) -> np.ndarray:
        out = self._batch.random(shape)[0]
        return float(out) if np.ndim(out) == 0 else out

    def uniform(self, low=0.0, high=1.0, shape=()):
        return low + (high - low) * self.random(shape)

    def normal(self, shape=()) -> np.ndarray:
        out = self._batch.normal(shape)[0]
        return float(out) if np.ndim(out) == 0 else out

    def integers(self, low: int, high: int, shape=()):
        """Integers in ``[low, high)`` via ``low + floor(u * (high - low))``."""
        u = self.random(shape)
        out = low + np.floor(np.asarray(u) * (high - low)).astype(np.int64)
        return int(out) if np.ndim(out) == 0 else out

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random((n,)), kind="stable")

    def choice(self, n: int, p) -> int:
        """Index drawn from the categorical distribution ``p`` (inverse CDF)."""
        cdf = np.cumsum(p)
        return int(min(np.searchsorted(cdf, self.random() * cdf[-1], side="right"), n - 1))


def batch_for(seed: int, stream, ids) -> BatchGenerator:
    """Lockstep streams for a list of item ids (e.g. scene ids) under one seed."""
    base = derive_key(seed, stream)
    return BatchGenerator([mix64_int(base ^ mix64_int(stream_id(int(i)))) for i in ids])
