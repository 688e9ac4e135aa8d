"""Named, reproducible pseudo-random generator: xoshiro256++ seeded via splitmix64.

Dataset manifests name the generator algorithm rather than a library, so that
byte-identical collections can be reproduced from the manifest alone.  The
implementation below is vectorised: a ``XoshiroBatch`` advances many
independent streams (one per episode) in lockstep with numpy uint64
arithmetic, which wraps modulo 2^64 exactly as the reference algorithm
requires.
"""

from __future__ import annotations

import numpy as np

PRNG_NAME = "splitmix64+xoshiro256++"

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_MASK = _U64(0xFFFFFFFFFFFFFFFF)


def _splitmix64_next(state):
    """One splitmix64 output per element of ``state``; returns (output, new state)."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> _U64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> _U64(27))) * _MIX2) & _MASK
    return z ^ (z >> _U64(31)), state


def derive_seed(master_seed: int, index) -> np.ndarray:
    """Per-stream 64-bit seed for stream ``index`` of a master seed.

    Mixing the pair through two splitmix64 steps keeps streams with adjacent
    indices statistically unrelated, so collection can shard by episode index.
    """
    idx = np.asarray(index, dtype=np.uint64)
    s = (_U64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ ((idx + _U64(1)) * _GOLDEN)) & _MASK
    out, s = _splitmix64_next(s)
    out, _ = _splitmix64_next(s ^ out)
    return out


def _rotl(x, k: int):
    k = _U64(k)
    return ((x << k) | (x >> (_U64(64) - k))) & _MASK


class XoshiroBatch:
    """A batch of independent xoshiro256++ streams advanced in lockstep.

    Each stream's four state words come from its own splitmix64 chain, the
    seeding procedure recommended
    for this generator family.
    """

    def __init__(self, seeds):
        seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
        self.n = seeds.shape[0]
        state = np.empty((4, self.n), dtype=np.uint64)
        sm = seeds.copy()
        for i in range(4):
            state[i], sm = _splitmix64_next(sm)
        self._s = state

    @classmethod
    def for_episodes(cls, master_seed: int, episode_indices) -> "XoshiroBatch":
        return cls(derive_seed(master_seed, np.asarray(episode_indices)))

    def next_uint64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
        t = (s1 << _U64(17)) & _MASK
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = np.stack([s0, s1, s2, s3])
        return result

    def uniform01(self) -> np.ndarray:
        """Uniform doubles in [0, 1) from the top 53 bits."""
        return (self.next_uint64() >> _U64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> np.ndarray:
        return lo + (hi - lo) * self.uniform01()

    def randint(self, n: int) -> np.ndarray:
        """Uniform integers in {0, ..., n-1} (via the 53-bit double path)."""
        return np.minimum((self.uniform01() * n).astype(np.int64), n - 1)


class Xoshiro:
    """Single-stream convenience wrapper around :class:`XoshiroBatch`."""

    def __init__(self, seed: int):
        self._b = XoshiroBatch(np.asarray([seed], dtype=np.uint64))

    def next_uint64(self) -> int:
        return int(self._b.next_uint64()[0])

    def uniform01(self) -> float:
        return float(self._b.uniform01()[0])

    def uniform(self, lo: float, hi: float) -> float:
        return float(self._b.uniform(lo, hi)[0])

    def randint(self, n: int) -> int:
        return int(self._b.randint(n)[0])
