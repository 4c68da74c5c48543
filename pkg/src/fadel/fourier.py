"""Iterative radix-2 FFT over the last axis.

Power-of-two lengths only.  Bit-reversal permutations and per-stage
twiddle factors are cached per transform length, and the butterfly loop
is vectorized over all leading axes, so batches of frames transform in a
handful of numpy operations per stage.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

_PLAN_CACHE: dict[int, tuple[np.ndarray, list[np.ndarray]]] = {}


def _plan(n: int) -> tuple[np.ndarray, list[np.ndarray]]:
    if n in _PLAN_CACHE:
        return _PLAN_CACHE[n]
    if n <= 0 or n & (n - 1):
        raise InputError(f"FFT length must be a positive power of two, got {n}")
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    twiddles = []
    m = 2
    while m <= n:
        half = m // 2
        twiddles.append(np.exp(-2j * np.pi * np.arange(half) / m))
        m *= 2
    _PLAN_CACHE[n] = (rev, twiddles)
    return rev, twiddles


def fft(x: np.ndarray) -> np.ndarray:
    """Complex DFT of the last axis; length must be a power of two."""
    arr = np.asarray(x)
    n = arr.shape[-1]
    rev, twiddles = _plan(n)
    out = arr[..., rev].astype(np.complex128)
    lead = out.shape[:-1]
    for stage, tw in enumerate(twiddles):
        m = 2 << stage
        half = m // 2
        view = out.reshape(lead + (n // m, m))
        even = view[..., :half]
        odd = view[..., half:] * tw
        view[..., half:] = even - odd
        view[..., :half] = even + odd
    return out


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft`, via conjugation."""
    arr = np.asarray(x)
    return np.conj(fft(np.conj(arr))) / arr.shape[-1]


def rfft(x: np.ndarray) -> np.ndarray:
    """DFT of real input, returning the n//2 + 1 non-negative-frequency bins."""
    arr = np.asarray(x, dtype=np.float64)
    n = arr.shape[-1]
    return fft(arr)[..., : n // 2 + 1]
