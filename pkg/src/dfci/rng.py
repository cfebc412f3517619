"""Counter-based random streams.

Every random quantity in the package is a pure function of a 64-bit seed and
an integer counter, so results never depend on call order, chunking or the
number of worker threads.

Algorithm (reproducible in any language):

* ``splitmix64(x)``: the standard SplitMix64 finaliser.
* ``derive_seed(seed, index) = splitmix64(splitmix64(seed) + index mod 2**64)``.
* Philox4x32-10 with key ``(seed & 0xFFFFFFFF, seed >> 32)`` and counter
  ``(index & 0xFFFFFFFF, index >> 32, stream, 0)``.
* The four 32-bit output words ``w0..w3`` give two doubles in [0, 1):
  ``((w0 << 21) ^ (w1 >> 11)) * 2**-53`` and the same for ``(w2, w3)``.
"""

from __future__ import annotations

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_M32 = np.uint64(MASK32)
_S32 = np.uint64(32)

# stream ids used across the package
STREAM_SAMPLE = 0
STREAM_SPLIT = 1
STREAM_NOISE = 2
STREAM_SPEC = 3


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Child seed for substream ``index`` of ``seed``."""
    return splitmix64((splitmix64(seed & MASK64) + index) & MASK64)


def philox4x32(counter, key, rounds: int = 10):
    """Vectorised Philox4x32.

    ``counter`` is a sequence of four uint arrays (or ints), ``key`` a pair.
    All arrays broadcast together. Returns four uint64 arrays holding 32-bit
    words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _M32 for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _M32 for k in key)
    for _ in range(rounds):
        p0 = c0 * _PHILOX_M0
        p1 = c2 * _PHILOX_M1
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _M32,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _M32,
        )
        k0 = (k0 + _PHILOX_W0) & _M32
        k1 = (k1 + _PHILOX_W1) & _M32
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    bits = ((hi << np.uint64(21)) ^ (lo >> np.uint64(11))) & np.uint64((1 << 53) - 1)
    return bits.astype(np.float64) * (2.0**-53)


def uniform_pairs(seed, index, stream: int = STREAM_SAMPLE):
    """Two independent U[0,1) arrays for draws ``index`` under ``seed``.

    ``seed`` may be a scalar or an array broadcastable against ``index``.
    """
    seed = np.asarray(seed, dtype=np.uint64)
    index = np.asarray(index, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(
        (index & _M32, index >> _S32, np.uint64(stream), np.uint64(0)),
        (seed & _M32, seed >> _S32),
    )
    return _to_unit(w0, w1), _to_unit(w2, w3)


def uniforms(seed: int, n: int, stream: int) -> np.ndarray:
    """``n`` uniforms from one stream (first member of each pair)."""
    u, _ = uniform_pairs(seed, np.arange(n, dtype=np.uint64), stream)
    return u


def derive_seeds(seed: int, indices) -> np.ndarray:
    """Vectorised :func:`derive_seed`; returns a uint64 array."""
    return np.array([derive_seed(seed, int(i)) for i in indices], dtype=np.uint64)
