"""Mono 16-bit PCM WAV reading and writing via the stdlib wave module."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import InputError

PCM16_SCALE = 32767.0


def write_wav(path, samples, sample_rate: int = 16000) -> None:
    """Write a float waveform in [-1, 1] as mono PCM16."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("waveform must be a non-empty 1-D array")
    peak = float(np.max(np.abs(x)))
    if not np.isfinite(peak) or peak > 1.0 + 1e-9:
        raise InputError(f"waveform exceeds [-1, 1] (peak {peak:.6g}); normalize before writing")
    ints = np.round(np.clip(x, -1.0, 1.0) * PCM16_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(ints.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono PCM16 WAV; returns (float waveform in [-1, 1], rate)."""
    path = Path(path)
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise InputError(f"{path} is not mono 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    ints = np.frombuffer(raw, dtype="<i2")
    return ints.astype(np.float64) / PCM16_SCALE, rate
