"""Log-mel statistics front-end: waveform in, fixed 80-dim vector out.

Pipeline: frame (512 samples, hop 256) -> periodic Hann window -> power
spectrum via the in-repo radix-2 FFT -> 40 triangular mel filters
(Slaney-style scale, area-normalized) -> natural log with floor ->
concatenated per-band mean and standard deviation over frames.

The extraction is a pure function of (waveform, config); an optional
versioned cache file maps utterance ids to vectors so repeated
evaluations skip the DSP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fourier
from .errors import ConfigError, InputError, VersionError
from .ioutil import atomic_path, savez_deterministic, sha256_text

CACHE_VERSION = 1

# Slaney mel scale: linear below 1 kHz (200/3 Hz per mel), logarithmic
# above with 27 mels per ln(6.4) octave span.
_F_SP = 200.0 / 3.0
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOG_STEP = np.log(6.4) / 27.0


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end settings; ``dim`` is the feature vector length."""

    sample_rate: int = 16000
    frame_len: int = 512
    hop: int = 256
    n_mels: int = 40
    fmin: float = 20.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def validate(self) -> "FeatureConfig":
        if self.frame_len <= 0 or self.frame_len & (self.frame_len - 1):
            raise ConfigError(f"frame_len must be a power of two, got {self.frame_len}")
        if self.hop <= 0:
            raise ConfigError("hop must be positive")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if not (0.0 <= self.fmin < self.fmax):
            raise ConfigError("need 0 <= fmin < fmax")
        if self.fmax > self.sample_rate / 2:
            raise ConfigError(f"fmax {self.fmax} exceeds the Nyquist rate {self.sample_rate / 2}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        return self

    @property
    def dim(self) -> int:
        return 2 * self.n_mels

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "frame_len": self.frame_len,
            "hop": self.hop,
            "n_mels": self.n_mels,
            "fmin": self.fmin,
            "fmax": self.fmax,
            "log_floor": self.log_floor,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureConfig":
        allowed = set(cls().to_dict())
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"feature config has unknown fields: {sorted(unknown)}")
        return cls(**payload).validate()

    def fingerprint(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True))[:16]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Slice a 1-D signal into (n_frames, frame_len) rows."""
    starts = np.arange(0, x.size - frame_len + 1, hop)
    idx = starts[:, None] + np.arange(frame_len)
    return x[idx]


def fft_real(frames) -> np.ndarray:
    """Radix-2 FFT of real frames, keeping the n//2 + 1 one-sided bins."""
    arr = np.asarray(frames, dtype=np.float64)
    return fourier.rfft(arr)


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    mel = f / _F_SP
    above = f >= _MIN_LOG_HZ
    mel = np.where(above, _MIN_LOG_MEL + np.log(np.maximum(f, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOG_STEP, mel)
    return mel


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * _F_SP
    above = m >= _MIN_LOG_MEL
    return np.where(above, _MIN_LOG_HZ * np.exp(_LOG_STEP * (m - _MIN_LOG_MEL)), f)


def mel_filterbank(config: FeatureConfig) -> np.ndarray:
    """Triangular area-normalized filters, shape (n_mels, frame_len//2 + 1)."""
    config.validate()
    n_bins = config.frame_len // 2 + 1
    bin_hz = np.arange(n_bins) * config.sample_rate / config.frame_len
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2))
    fb = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_hz - lo) / (center - lo)
        down = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down)) * (2.0 / (hi - lo))
    return fb


def extract(waveform, config: FeatureConfig) -> np.ndarray:
    """80-dim log-mel statistics vector for one waveform."""
    config.validate()
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("waveform must be 1-D")
    if x.size < config.frame_len:
        raise InputError(f"waveform has {x.size} samples, need at least one frame of {config.frame_len}")
    frames = frame_signal(x, config.frame_len, config.hop) * hann_window(config.frame_len)
    spectrum = fft_real(frames)
    power = spectrum.real**2 + spectrum.imag**2
    mel_power = power @ mel_filterbank(config).T
    log_mel = np.log(np.maximum(mel_power, config.log_floor))
    return np.concatenate([log_mel.mean(axis=0), log_mel.std(axis=0)])


def extract_batch(waveforms, config: FeatureConfig) -> np.ndarray:
    """Stack :func:`extract` over an iterable of waveforms."""
    return np.stack([extract(w, config) for w in waveforms])


def save_feature_cache(path, utt_ids, features, config: FeatureConfig) -> None:
    """Persist utterance-id -> vector pairs with a config fingerprint."""
    features = np.asarray(features, dtype=np.float64)
    utt_ids = list(utt_ids)
    if features.ndim != 2 or features.shape[0] != len(utt_ids):
        raise InputError("features must be (n_utts, dim) aligned with utt_ids")
    with atomic_path(Path(path)) as tmp:
        savez_deterministic(
            tmp,
            version=np.array(CACHE_VERSION),
            config_json=np.array(json.dumps(config.to_dict(), sort_keys=True)),
            utt_ids=np.array(utt_ids, dtype=np.str_),
            features=features,
        )


def load_feature_cache(path, config: FeatureConfig):
    """Return (utt_ids, features) or None when missing or stale."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise VersionError(f"unreadable feature cache {path}: {exc}") from exc
    with data:
        if "version" not in data or int(data["version"]) != CACHE_VERSION:
            return None
        if str(data["config_json"]) != json.dumps(config.to_dict(), sort_keys=True):
            return None
        return [str(u) for u in data["utt_ids"]], np.asarray(data["features"], dtype=np.float64)
