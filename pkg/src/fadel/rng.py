"""Deterministic counter-based random streams.

Every stochastic choice in the package flows through :class:`RngStream`, a
counter-mode generator built on the splitmix64 finalizer.  Output ``i`` of a
stream with key ``k`` is ``mix64(k + GOLDEN * i)``, so draws are a pure
function of ``(seed, derivation path, counter)`` and are reproducible across
platforms, processes, and numpy versions.  Independent substreams for
unrelated purposes (corpus utterances, weight init, per-epoch shuffles) are
obtained with :meth:`RngStream.derive` instead of sharing one counter.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# FNV-1a, used to hash string tokens in derivation paths.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_U64_GOLDEN = np.uint64(_GOLDEN)
_U64_MIX1 = np.uint64(_MIX1)
_U64_MIX2 = np.uint64(_MIX2)


def _mix64(z: int) -> int:
    """splitmix64 finalizer on a Python integer (mod 2**64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer; uint64 in, uint64 out."""
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _U64_MIX1
    z ^= z >> np.uint64(27)
    z *= _U64_MIX2
    z ^= z >> np.uint64(31)
    return z


def _hash_token(token: int | str) -> int:
    if isinstance(token, str):
        h = _FNV_OFFSET
        for byte in token.encode("utf-8"):
            h = ((h ^ byte) * _FNV_PRIME) & _MASK
        return h
    if isinstance(token, (int, np.integer)):
        return _mix64((int(token) & _MASK) + _GOLDEN)
    raise TypeError(f"derivation tokens must be int or str, got {type(token).__name__}")


class RngStream:
    """Counter-based deterministic random stream.

    Parameters
    ----------
    seed : int
        Any integer; reduced mod 2**64 and diffused through the mix
        function so that nearby seeds give unrelated streams.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError("seed must be an integer")
        self._key = _mix64(int(seed) & _MASK)
        self._count = 0

    @classmethod
    def _from_key(cls, key: int) -> "RngStream":
        stream = cls.__new__(cls)
        stream._key = key & _MASK
        stream._count = 0
        return stream

    def derive(self, *tokens: int | str) -> "RngStream":
        """Return an independent child stream addressed by ``tokens``.

        Folding is sequential, so ``derive("a", 1)`` and ``derive(1, "a")``
        differ.  The child starts with a fresh counter; drawing from it
        does not advance the parent.
        """
        if not tokens:
            raise ValueError("derive() requires at least one token")
        key = self._key
        for token in tokens:
            key = _mix64(((key + _GOLDEN) & _MASK) ^ _hash_token(token))
        return RngStream._from_key(key)

    def raw(self, size: int | None = None) -> np.ndarray | int:
        """Next raw 64-bit outputs as uint64; scalar int when size is None."""
        n = 1 if size is None else int(size)
        if n < 0:
            raise ValueError("size must be non-negative")
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        vals = _mix64_array(np.uint64(self._key) + _U64_GOLDEN * idx)
        if size is None:
            return int(vals[0])
        return vals

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        """Uniform draws in [low, high) with 53-bit resolution."""
        shape = None if size is None else size
        n = 1 if shape is None else int(np.prod(shape))
        bits = self.raw(n) >> np.uint64(11)
        u = bits.astype(np.float64) * 2.0**-53
        out = low + (high - low) * u
        if shape is None:
            return float(out[0])
        return out.reshape(shape)

    def open_unit(self, size: int) -> np.ndarray:
        """Uniform draws on the open interval (0, 1); safe under log()."""
        bits = self.raw(int(size)) >> np.uint64(12)
        return (bits.astype(np.float64) + 0.5) * 2.0**-52

    def normal(self, size=None):
        """Standard normal draws via the Box-Muller transform."""
        shape = None if size is None else size
        n = 1 if shape is None else int(np.prod(shape))
        pairs = (n + 1) // 2
        u1 = self.open_unit(pairs)
        u2 = self.uniform(size=pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if shape is None:
            return float(z[0])
        return z.reshape(shape)

    def integers(self, n: int, size=None):
        """Uniform integers in [0, n).  Bias is below n * 2**-53."""
        if n <= 0:
            raise ValueError("n must be positive")
        u = self.uniform(size=1 if size is None else size)
        out = np.floor(np.asarray(u) * n).astype(np.int64)
        out = np.minimum(out, n - 1)  # guards the u -> 1.0 rounding edge
        if size is None:
            return int(out.reshape(-1)[0])
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of arange(n) by sorting raw 64-bit keys."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty(0, dtype=np.int64)
        keys = self.raw(n)
        return np.argsort(keys, kind="stable").astype(np.int64)

    def choice(self, options):
        """Pick one element of a sequence uniformly."""
        seq = list(options)
        if not seq:
            raise ValueError("options must be non-empty")
        return seq[self.integers(len(seq))]
