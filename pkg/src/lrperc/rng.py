"""Counter-based random numbers.

Every uniform is a pure function of ``(key, counter)``, so any edge's random
variable can be recomputed without replaying a sequential stream. Keys are
derived from ``(master seed, stream index)`` and then from per-object tags
(displacement class, tree node, vertex pair).

The mixing function is the SplitMix64 finaliser; sequential streams for
non-sampler work (bootstrap, subsampling) use numpy's Philox generator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True)
def mix64(z):
    z = np.uint64(z) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def derive_key(key, tag):
    """Child key for ``tag`` under ``key``."""
    return mix64(np.uint64(key) ^ mix64(np.uint64(tag)))


@njit(cache=True)
def uniform_open(key, counter):
    """Uniform on the open interval (0, 1) for ``(key, counter)``."""
    z = mix64(np.uint64(key) ^ mix64(np.uint64(counter) + _GOLDEN))
    return (np.float64(z >> _S11) + 0.5) * _INV53


def stream_key(seed: int, index: int) -> np.uint64:
    """Key of stream ``index`` under master ``seed`` (both taken mod 2^64)."""
    return np.uint64(derive_key(np.uint64(seed % 2**64), np.uint64(index % 2**64)))


@dataclass
class RngStream:
    """A replayable uniform stream identified by ``(seed, index)``.

    ``counter`` advances with each draw; identical ``(seed, index, counter)``
    always give the same value.
    """

    seed: int
    index: int = 0
    counter: int = 0

    @property
    def key(self) -> np.uint64:
        return stream_key(self.seed, self.index)

    def uniform(self) -> float:
        u = float(uniform_open(self.key, np.uint64(self.counter)))
        self.counter += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        out = _uniform_block(self.key, np.uint64(self.counter), n)
        self.counter += n
        return out

    def child(self, index: int) -> "RngStream":
        return RngStream(int(derive_key(self.key, np.uint64(index))), 0, 0)

    def generator(self) -> np.random.Generator:
        """A numpy Generator (Philox) keyed by this stream; independent of ``counter``."""
        return np.random.Generator(np.random.Philox(key=[self.seed % 2**64, self.index % 2**64]))


@njit(cache=True)
def _uniform_block(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform_open(key, start + np.uint64(i))
    return out
