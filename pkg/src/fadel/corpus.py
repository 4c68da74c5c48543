"""Deterministic synthetic spoofing corpus with attack-disjoint splits.

Bonafide utterances are harmonic stacks with vibrato, amplitude envelope,
and low-level colored noise.  Spoofed utterances apply one of six
parametric attacks to a bonafide signal.  The default manifest trains on
attacks T01-T03 and evaluates on T01-T06, so T04-T06 are out of
distribution, mirroring the seen/unseen attack dichotomy of anti-spoofing
benchmarks.

Every utterance draws all of its randomness from a stream derived from
(master seed, split name, utterance index), so regeneration is
byte-identical file by file, and after any attack the waveform is
renormalized to a peak drawn from the same distribution as bonafide peaks
so overall energy carries no label information.

Protocol files use the ASVspoof CM five-column layout:
``SPEAKER UTT_ID - ATTACK_ID KEY`` with attack id "-" for bonafide rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fourier
from .audio_io import write_wav
from .errors import ConfigError, InputError
from .ioutil import atomic_path, sha256_text
from .rng import RngStream

SAMPLE_RATE = 16000
SPLITS = ("train", "dev", "eval")
_UTT_PREFIX = {"train": "TRN", "dev": "DEV", "eval": "EVL"}

ATTACK_KINDS = (
    "bitcrush",
    "additive-hum",
    "lowpass-resample",
    "phase-scramble",
    "hard-clip",
    "frame-shuffle",
)

# Parameter draw specs: ("float", lo, hi), ("int", lo, hi) inclusive, or
# ("choice", options).  Fixed scalars are written as degenerate ranges.
_PARAM_FORMS = ("float", "int", "choice")


@dataclass(frozen=True)
class AttackSpec:
    """One parametric spoofing transform."""

    attack_id: str
    kind: str
    params: dict

    def validate(self) -> "AttackSpec":
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}; choose from {ATTACK_KINDS}")
        for name, spec in self.params.items():
            if not isinstance(spec, tuple) or not spec or spec[0] not in _PARAM_FORMS:
                raise ConfigError(f"attack {self.attack_id}: malformed parameter spec for {name!r}")
            if spec[0] in ("float", "int") and not (len(spec) == 3 and spec[1] <= spec[2]):
                raise ConfigError(f"attack {self.attack_id}: bad range for {name!r}")
            if spec[0] == "choice" and len(spec[1]) == 0:
                raise ConfigError(f"attack {self.attack_id}: empty choice set for {name!r}")
        return self


def default_attacks() -> dict:
    """The six shipped attacks; T04-T06 are held out of train/dev."""
    specs = [
        AttackSpec("T01", "bitcrush", {"bits": ("int", 2, 6)}),
        AttackSpec("T02", "additive-hum", {
            "base_freq": ("choice", (50.0, 60.0)),
            "level_db": ("float", -20.0, -8.0),
            "n_harmonics": ("int", 10, 30),
        }),
        AttackSpec("T03", "lowpass-resample", {"target_rate": ("float", 1500.0, 3200.0)}),
        AttackSpec("T04", "phase-scramble", {"strength": ("float", 0.5, 1.0)}),
        AttackSpec("T05", "hard-clip", {"clip_level": ("float", 0.12, 0.22)}),
        AttackSpec("T06", "frame-shuffle", {
            "frame_len": ("int", 800, 800),
            "jitter": ("float", 1.5, 5.0),
        }),
    ]
    return {s.attack_id: s.validate() for s in specs}


@dataclass(frozen=True)
class TrialRecord:
    """One protocol row, optionally carrying a score and uncertainty."""

    speaker: str
    utt_id: str
    attack_id: str
    key: str
    score: float | None = None
    uncertainty: float | None = None

    def validate(self) -> "TrialRecord":
        if self.key not in ("bonafide", "spoof"):
            raise InputError(f"trial {self.utt_id}: key must be 'bonafide' or 'spoof', got {self.key!r}")
        if (self.key == "bonafide") != (self.attack_id == "-"):
            raise InputError(f"trial {self.utt_id}: attack id '-' must pair exactly with key bonafide")
        return self


@dataclass(frozen=True)
class SplitSpec:
    n_bonafide: int
    n_spoof: int
    attacks: tuple


@dataclass(frozen=True)
class CorpusManifest:
    """Everything that determines the generated corpus."""

    master_seed: int = 101
    sample_rate: int = SAMPLE_RATE
    duration_range: tuple = (1.0, 4.0)
    n_speakers: int = 48
    bonafide_spoof_ratio: tuple = (1, 9)
    splits: dict = field(default_factory=dict)
    version: int = 1

    def validate(self) -> "CorpusManifest":
        if self.version != 1:
            raise ConfigError(f"unsupported manifest version {self.version}")
        if self.sample_rate != SAMPLE_RATE:
            raise ConfigError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        lo, hi = self.duration_range
        if not (0.25 <= lo <= hi <= 10.0):
            raise ConfigError(f"duration_range must satisfy 0.25 <= lo <= hi <= 10, got {self.duration_range}")
        if self.n_speakers < len(SPLITS):
            raise ConfigError(f"n_speakers must be >= {len(SPLITS)} so every split has a speaker")
        if set(self.splits) != set(SPLITS):
            raise ConfigError(f"splits must be exactly {set(SPLITS)}, got {set(self.splits)}")
        known = default_attacks()
        for name in SPLITS:
            spec = self.splits[name]
            if spec.n_bonafide < 1 or spec.n_spoof < 1:
                raise ConfigError(f"split {name}: counts must be >= 1")
            if not spec.attacks:
                raise ConfigError(f"split {name}: needs at least one attack id")
            unknown = [a for a in spec.attacks if a not in known]
            if unknown:
                raise ConfigError(f"split {name}: unknown attack ids {unknown}")
            if len(set(spec.attacks)) != len(spec.attacks):
                raise ConfigError(f"split {name}: duplicate attack ids")
        rb, rs = self.bonafide_spoof_ratio
        if rb <= 0 or rs <= 0:
            raise ConfigError("bonafide_spoof_ratio entries must be positive")
        seen = set(self.splits["train"].attacks) | set(self.splits["dev"].attacks)
        ood = set(self.splits["eval"].attacks) - seen
        if not ood:
            raise ConfigError(
                "manifest violates the OOD condition: eval must contain at least one "
                "attack id absent from train and dev"
            )
        return self

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "master_seed": self.master_seed,
            "sample_rate": self.sample_rate,
            "duration_range": list(self.duration_range),
            "n_speakers": self.n_speakers,
            "bonafide_spoof_ratio": list(self.bonafide_spoof_ratio),
            "splits": {
                name: {
                    "n_bonafide": s.n_bonafide,
                    "n_spoof": s.n_spoof,
                    "attacks": list(s.attacks),
                }
                for name, s in sorted(self.splits.items())
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def fingerprint(self) -> str:
        return sha256_text(self.to_json())


def default_manifest() -> CorpusManifest:
    return CorpusManifest(
        splits={
            "train": SplitSpec(300, 2700, ("T01", "T02", "T03")),
            "dev": SplitSpec(100, 900, ("T01", "T02", "T03")),
            "eval": SplitSpec(120, 1080, ("T01", "T02", "T03", "T04", "T05", "T06")),
        }
    ).validate()


def manifest_from_dict(payload: dict) -> CorpusManifest:
    allowed = {"version", "master_seed", "sample_rate", "duration_range",
               "n_speakers", "bonafide_spoof_ratio", "splits"}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"manifest has unknown fields: {sorted(unknown)}")
    splits = {}
    for name, raw in payload.get("splits", {}).items():
        extra = set(raw) - {"n_bonafide", "n_spoof", "attacks"}
        if extra:
            raise ConfigError(f"manifest split {name!r} has unknown fields: {sorted(extra)}")
        try:
            splits[name] = SplitSpec(int(raw["n_bonafide"]), int(raw["n_spoof"]), tuple(raw["attacks"]))
        except KeyError as exc:
            raise ConfigError(f"manifest split {name!r} is missing field {exc.args[0]!r}") from exc
    base = default_manifest()
    return CorpusManifest(
        master_seed=int(payload.get("master_seed", base.master_seed)),
        sample_rate=int(payload.get("sample_rate", base.sample_rate)),
        duration_range=tuple(payload.get("duration_range", base.duration_range)),
        n_speakers=int(payload.get("n_speakers", base.n_speakers)),
        bonafide_spoof_ratio=tuple(payload.get("bonafide_spoof_ratio", base.bonafide_spoof_ratio)),
        splits=splits or dict(base.splits),
        version=int(payload.get("version", 1)),
    ).validate()


def load_manifest(path) -> CorpusManifest:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"manifest {path} must be a JSON object")
    return manifest_from_dict(payload)


# ---------------------------------------------------------------------------
# Bonafide synthesis


def synth_bonafide(rng: RngStream, duration: float, f0_range=(100.0, 280.0),
                   sample_rate: int = SAMPLE_RATE, n_partials_range=(3, 8),
                   vibrato_depth_range=(0.002, 0.012), vibrato_rate_range=(4.0, 7.0),
                   noise_db_range=(-45.0, -30.0), peak_range=(0.3, 0.85)) -> np.ndarray:
    """Synthesize one bonafide utterance.

    A stack of 3-8 harmonic partials with a dominant fundamental, slow
    vibrato, raised-cosine attack/release envelope with gentle amplitude
    modulation, and low-level colored noise.  Peak amplitude is always
    <= 0.9.  Pass degenerate ranges (e.g. ``vibrato_depth_range=(0, 0)``)
    to disable a component.
    """
    if duration <= 0:
        raise InputError("duration must be positive")
    n = max(1, round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(*f0_range)
    n_partials = rng.integers(n_partials_range[1] - n_partials_range[0] + 1) + n_partials_range[0]
    decay = rng.uniform(0.9, 1.8)
    # (k+1)**-decay with +-20% jitter keeps the fundamental strictly dominant.
    ks = np.arange(1, n_partials + 1, dtype=np.float64)
    amps = ks**-decay * (1.0 + 0.2 * rng.uniform(-1.0, 1.0, size=n_partials))

    vib_depth = rng.uniform(*vibrato_depth_range)
    vib_rate = rng.uniform(*vibrato_rate_range)
    vib_phase = rng.uniform(0.0, 2.0 * math.pi)
    inst_f0 = f0 * (1.0 + vib_depth * np.sin(2.0 * math.pi * vib_rate * t + vib_phase))
    phase = 2.0 * math.pi * np.cumsum(inst_f0) / sample_rate

    wave = np.zeros(n)
    for k in range(n_partials):
        wave += amps[k] * np.sin((k + 1) * phase + rng.uniform(0.0, 2.0 * math.pi))

    # Raised-cosine attack/release plus slow amplitude modulation.
    attack = min(n // 2, max(1, round(rng.uniform(0.03, 0.12) * sample_rate)))
    release = min(n // 2, max(1, round(rng.uniform(0.05, 0.25) * sample_rate)))
    env = np.ones(n)
    env[:attack] = 0.5 - 0.5 * np.cos(math.pi * np.arange(attack) / attack)
    env[n - release :] = 0.5 + 0.5 * np.cos(math.pi * np.arange(release) / release)
    am_rate = rng.uniform(0.5, 2.0)
    am_phase = rng.uniform(0.0, 2.0 * math.pi)
    env *= 1.0 + 0.1 * np.sin(2.0 * math.pi * am_rate * t + am_phase)

    noise_db = rng.uniform(*noise_db_range)
    white = rng.normal(size=n)
    beta = rng.uniform(0.8, 0.95)
    kernel = beta ** np.arange(64)
    kernel /= kernel.sum()
    colored = np.convolve(white, kernel, mode="same")
    sig_rms = float(np.sqrt(np.mean(wave**2))) or 1.0
    noise_rms = float(np.sqrt(np.mean(colored**2))) or 1.0
    noise = colored * (sig_rms * 10.0 ** (noise_db / 20.0) / noise_rms)

    wave = (wave + noise) * env
    peak = float(np.max(np.abs(wave)))
    target_peak = rng.uniform(*peak_range)
    if peak > 0:
        wave *= target_peak / peak
    return wave


# ---------------------------------------------------------------------------
# Attacks


def _draw_params(spec: AttackSpec, rng: RngStream) -> dict:
    drawn = {}
    for name in sorted(spec.params):
        form = spec.params[name]
        if form[0] == "float":
            drawn[name] = rng.uniform(form[1], form[2])
        elif form[0] == "int":
            drawn[name] = int(rng.integers(form[2] - form[1] + 1) + form[1])
        else:
            drawn[name] = rng.choice(form[1])
    return drawn


def _bitcrush(wave, rng, sr, bits):
    step = 2.0 / (2**bits)  # mid-rise lattice: odd multiples of step/2
    q = (np.floor(wave / step) + 0.5) * step
    return np.clip(q, -1.0 + step / 2.0, 1.0 - step / 2.0)


def _additive_hum(wave, rng, sr, base_freq, level_db, n_harmonics):
    # Mains buzz: 1/h harmonic comb so the upper harmonics reach spectral
    # regions the bonafide synth leaves near the noise floor.
    t = np.arange(wave.size) / sr
    rms = float(np.sqrt(np.mean(wave**2))) or 1.0
    amp = rms * 10.0 ** (level_db / 20.0)
    hum = np.zeros_like(wave)
    for h in range(1, int(n_harmonics) + 1):
        hum += (amp / h) * np.sin(2.0 * math.pi * base_freq * h * t + rng.uniform(0.0, 2.0 * math.pi))
    return wave + hum


def _lowpass_resample(wave, rng, sr, target_rate):
    n = wave.size
    m = max(2, round(n * target_rate / sr))
    t = np.arange(n) / sr
    t_lo = np.arange(m) * (n / (m * sr))
    down = np.interp(t_lo, t, wave)
    # Zero-order-hold reconstruction: the staircase error is in-band, so the
    # transform audibly degrades even signals living below the cutoff.
    idx = np.minimum((t * (m * sr / n)).astype(np.int64), m - 1)
    return down[idx]


def _phase_scramble(wave, rng, sr, strength, block: int = 4096):
    out = wave.copy()
    half = block // 2
    for start in range(0, wave.size - block + 1, block):
        spec = fourier.fft(out[start : start + block])
        rot = np.exp(1j * strength * rng.uniform(-math.pi, math.pi, size=half - 1))
        spec[1:half] *= rot
        spec[half + 1 :] = np.conj(spec[1:half][::-1])  # keep the signal real
        out[start : start + block] = fourier.ifft(spec).real
    return out


def _hard_clip(wave, rng, sr, clip_level):
    return np.clip(wave, -clip_level, clip_level)


def _frame_shuffle(wave, rng, sr, frame_len, jitter):
    frame_len = int(frame_len)
    nf = wave.size // frame_len
    if nf < 2:
        return wave.copy()
    keys = np.arange(nf, dtype=np.float64)
    keys += jitter * rng.uniform(-1.0, 1.0, size=nf)
    perm = np.argsort(keys, kind="stable")
    body = wave[: nf * frame_len].reshape(nf, frame_len)[perm].reshape(-1)
    return np.concatenate([body, wave[nf * frame_len :]])


_ATTACK_IMPL = {
    "bitcrush": _bitcrush,
    "additive-hum": _additive_hum,
    "lowpass-resample": _lowpass_resample,
    "phase-scramble": _phase_scramble,
    "hard-clip": _hard_clip,
    "frame-shuffle": _frame_shuffle,
}


def apply_attack(wave, spec: AttackSpec, rng: RngStream) -> np.ndarray:
    """Apply one attack; output has the same length and sample rate.

    Parameters are drawn from the spec's documented ranges using ``rng``,
    so the result is deterministic per (waveform, spec, stream state).
    """
    spec.validate()
    x = np.asarray(wave, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("waveform must be a non-empty 1-D array")
    params = _draw_params(spec, rng)
    out = _ATTACK_IMPL[spec.kind](x, rng, SAMPLE_RATE, **params)
    assert out.shape == x.shape
    return out


def snr_db(clean, processed) -> float:
    """SNR of ``processed`` against ``clean`` in dB; inf if identical."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(processed, dtype=np.float64) - clean
    p_noise = float(np.mean(noise**2))
    if p_noise == 0.0:
        return float("inf")
    return 10.0 * math.log10(float(np.mean(clean**2)) / p_noise)


# ---------------------------------------------------------------------------
# Corpus generation


def _speaker_pools(manifest: CorpusManifest) -> dict:
    """Disjoint speaker id pools per split: half train, quarter dev/eval."""
    ids = [f"SP{i + 1:02d}" for i in range(manifest.n_speakers)]
    n_train = max(1, manifest.n_speakers // 2)
    n_dev = max(1, (manifest.n_speakers - n_train) // 2)
    return {
        "train": ids[:n_train],
        "dev": ids[n_train : n_train + n_dev],
        "eval": ids[n_train + n_dev :],
    }


def _speaker_f0_range(manifest: CorpusManifest, speaker: str) -> tuple:
    center = RngStream(manifest.master_seed).derive("speaker", speaker).uniform(105.0, 245.0)
    return (center - 15.0, center + 15.0)


def plan_split(manifest: CorpusManifest, split: str) -> list:
    """Deterministic trial list (no audio) for one split."""
    spec = manifest.splits[split]
    pool = _speaker_pools(manifest)[split]
    attacks = list(spec.attacks)
    records = []
    total = spec.n_bonafide + spec.n_spoof
    for i in range(total):
        utt_id = f"{_UTT_PREFIX[split]}_{i + 1:06d}"
        speaker = pool[i % len(pool)]
        if i < spec.n_bonafide:
            records.append(TrialRecord(speaker, utt_id, "-", "bonafide"))
        else:
            attack = attacks[(i - spec.n_bonafide) % len(attacks)]
            records.append(TrialRecord(speaker, utt_id, attack, "spoof"))
    return records


def render_trial(manifest: CorpusManifest, split: str, index: int, record: TrialRecord) -> np.ndarray:
    """Render the waveform for one planned trial, deterministically."""
    rng = RngStream(manifest.master_seed).derive(split, index)
    duration = rng.uniform(*manifest.duration_range)
    wave = synth_bonafide(rng, duration, f0_range=_speaker_f0_range(manifest, record.speaker),
                          sample_rate=manifest.sample_rate)
    if record.key == "spoof":
        wave = apply_attack(wave, default_attacks()[record.attack_id], rng)
    # Shared peak target for both classes: energy must not give labels away.
    peak = float(np.max(np.abs(wave)))
    target = rng.uniform(0.3, 0.85)
    if peak > 0:
        wave = wave * (target / peak)
    return wave


def generate_corpus(manifest: CorpusManifest, out_dir) -> dict:
    """Write WAVs, protocol files, and a manifest copy under ``out_dir``.

    Returns {split: list of TrialRecord}.  Protocols are written last and
    atomically, so an interrupted run never leaves a partial protocol.
    Regeneration with the same manifest is byte-identical.
    """
    manifest.validate()
    out_dir = Path(out_dir)
    (out_dir / "protocols").mkdir(parents=True, exist_ok=True)
    all_records = {}
    for split in SPLITS:
        wav_dir = out_dir / "wav" / split
        wav_dir.mkdir(parents=True, exist_ok=True)
        records = plan_split(manifest, split)
        for index, record in enumerate(records):
            wave = render_trial(manifest, split, index, record)
            write_wav(wav_dir / f"{record.utt_id}.wav", wave, manifest.sample_rate)
        write_protocol(out_dir / "protocols" / f"{split}.txt", records)
        all_records[split] = records
    with atomic_path(out_dir / "manifest.json") as tmp:
        tmp.write_text(manifest.to_json(), encoding="utf-8")
    return all_records


# ---------------------------------------------------------------------------
# Protocol files


def write_protocol(path, records) -> None:
    """Write ASVspoof-style five-column protocol rows atomically."""
    lines = []
    for rec in records:
        rec.validate()
        lines.append(f"{rec.speaker} {rec.utt_id} - {rec.attack_id} {rec.key}")
    with atomic_path(Path(path)) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_protocol(path) -> list:
    """Parse a five-column protocol file into validated TrialRecords."""
    records = []
    seen = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InputError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
        speaker, utt_id, _, attack_id, key = parts
        if utt_id in seen:
            raise InputError(f"{path}:{lineno}: duplicate utterance id {utt_id}")
        seen.add(utt_id)
        records.append(TrialRecord(speaker, utt_id, attack_id, key).validate())
    if not records:
        raise InputError(f"{path}: empty protocol")
    return records
