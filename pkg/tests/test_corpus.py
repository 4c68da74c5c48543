"""Synthetic spoofing corpus: synthesis, attacks, manifests, generation.

Attack behavior is pinned with degenerate parameter ranges (fixed values
expressed as zero-width ranges), which turns each transform into a
deterministic function that analytic checks can reach.
"""

import json

import numpy as np
import pytest

from fadel import corpus
from fadel.audio_io import read_wav
from fadel.errors import ConfigError, InputError
from fadel.fourier import rfft
from fadel.rng import RngStream

SR = corpus.SAMPLE_RATE


def fixed(value, form="float"):
    """Degenerate range: draws always return ``value``."""
    return (form, value, value)


def clean_tone(f0=200.0, duration=1.5, seed=900):
    """Bonafide synth trimmed to a bare harmonic stack at a known f0."""
    return corpus.synth_bonafide(
        RngStream(seed).derive("tone"),
        duration,
        f0_range=(f0, f0),
        vibrato_depth_range=(0.0, 0.0),
        noise_db_range=(-120.0, -120.0),
    )


class TestBonafideSynthesis:
    def test_deterministic(self):
        a = corpus.synth_bonafide(RngStream(1).derive("s"), 1.0)
        b = corpus.synth_bonafide(RngStream(1).derive("s"), 1.0)
        np.testing.assert_array_equal(a, b)

    def test_length_and_peak(self):
        wave = corpus.synth_bonafide(RngStream(2).derive("s"), 2.0)
        assert wave.size == 2 * SR
        assert np.max(np.abs(wave)) <= 0.9

    def test_peak_range_respected(self):
        for seed in range(5):
            wave = corpus.synth_bonafide(RngStream(seed).derive("p"), 0.5)
            peak = np.max(np.abs(wave))
            assert 0.3 - 1e-9 <= peak <= 0.85 + 1e-9

    def test_fundamental_peak_in_spectrum(self):
        # With vibrato and noise disabled, a 200 Hz fundamental puts the
        # spectral maximum within one bin of 200 Hz in a 4096-point DFT.
        wave = clean_tone(f0=200.0)
        mid = wave.size // 2
        frame = wave[mid : mid + 4096] * np.hanning(4096)
        mags = np.abs(rfft(frame))
        bin_hz = SR / 4096.0
        peak_hz = np.argmax(mags) * bin_hz
        assert abs(peak_hz - 200.0) <= bin_hz

    def test_duration_validation(self):
        with pytest.raises(InputError):
            corpus.synth_bonafide(RngStream(1), 0.0)


class TestAttacks:
    def test_bitcrush_lattice(self):
        # 3-bit mid-rise quantization: every sample is an odd multiple of
        # step/2 = 0.125, bounded away from +-1.
        spec = corpus.AttackSpec("T01", "bitcrush", {"bits": fixed(3, "int")}).validate()
        wave = clean_tone(seed=901)
        out = corpus.apply_attack(wave, spec, RngStream(41).derive("a"))
        assert out.shape == wave.shape
        ratios = out / 0.125
        np.testing.assert_allclose(ratios, np.round(ratios), atol=1e-12)
        assert np.all(np.abs(np.round(ratios)).astype(int) % 2 == 1)
        assert np.max(np.abs(out)) <= 1.0 - 0.125

    def test_additive_hum_adds_mains_comb(self):
        spec = corpus.AttackSpec(
            "T02",
            "additive-hum",
            {"base_freq": ("choice", (50.0,)), "level_db": fixed(-10.0), "n_harmonics": fixed(8, "int")},
        ).validate()
        wave = clean_tone(seed=902, duration=2.0)
        out = corpus.apply_attack(wave, spec, RngStream(42).derive("a"))
        residual = out - wave
        # the residual is a pure 50 Hz comb: nearly all its energy sits
        # within a few bins (Hann leakage) of the harmonic lines
        frame = residual[:8192] * np.hanning(8192)
        power = np.abs(rfft(frame)) ** 2
        bin_hz = SR / 8192.0
        near_comb = np.zeros(power.size, dtype=bool)
        for h in range(1, 9):
            center = int(round(50.0 * h / bin_hz))
            near_comb[max(0, center - 3) : center + 4] = True
        assert power[near_comb].sum() > 0.99 * power.sum()
        assert power[near_comb].sum() > 0.0

    def test_lowpass_resample_holds_staircase(self):
        spec = corpus.AttackSpec("T03", "lowpass-resample", {"target_rate": fixed(2000.0)}).validate()
        wave = clean_tone(seed=903)
        out = corpus.apply_attack(wave, spec, RngStream(43).derive("a"))
        # zero-order hold at 2 kHz: output is piecewise constant with
        # runs of length sr/target = 8
        changes = np.flatnonzero(np.diff(out) != 0.0)
        assert changes.size > 0
        run_lengths = np.diff(changes)
        assert np.median(run_lengths) == 8.0

    def test_phase_scramble_keeps_magnitude_spectrum(self):
        spec = corpus.AttackSpec("T04", "phase-scramble", {"strength": fixed(1.0)}).validate()
        wave = clean_tone(seed=904, duration=1.0)
        out = corpus.apply_attack(wave, spec, RngStream(44).derive("a"))
        block = wave[:4096]
        out_block = out[:4096]
        np.testing.assert_allclose(
            np.abs(rfft(out_block)), np.abs(rfft(block)), rtol=1e-8, atol=1e-8
        )
        assert np.max(np.abs(out_block - block)) > 0.01  # but the waveform moved
        assert np.max(np.abs(out.imag)) if np.iscomplexobj(out) else True

    def test_hard_clip_level(self):
        spec = corpus.AttackSpec("T05", "hard-clip", {"clip_level": fixed(0.3)}).validate()
        wave = clean_tone(seed=905)
        assert np.max(np.abs(wave)) > 0.3
        out = corpus.apply_attack(wave, spec, RngStream(45).derive("a"))
        assert np.max(np.abs(out)) == pytest.approx(0.3, abs=1e-12)
        inside = np.abs(wave) < 0.3
        np.testing.assert_array_equal(out[inside], wave[inside])

    def test_frame_shuffle_zero_jitter_is_identity(self):
        spec = corpus.AttackSpec(
            "T06", "frame-shuffle", {"frame_len": fixed(800, "int"), "jitter": fixed(0.0)}
        ).validate()
        wave = clean_tone(seed=906)
        out = corpus.apply_attack(wave, spec, RngStream(46).derive("a"))
        np.testing.assert_array_equal(out, wave)

    def test_frame_shuffle_permutes_frames(self):
        spec = corpus.AttackSpec(
            "T06", "frame-shuffle", {"frame_len": fixed(800, "int"), "jitter": fixed(5.0)}
        ).validate()
        wave = clean_tone(seed=907, duration=2.0)
        out = corpus.apply_attack(wave, spec, RngStream(47).derive("a"))
        assert not np.array_equal(out, wave)
        # same multiset of samples in the shuffled body
        nf = wave.size // 800
        np.testing.assert_array_equal(
            np.sort(out[: nf * 800]), np.sort(wave[: nf * 800])
        )
        np.testing.assert_array_equal(out[nf * 800 :], wave[nf * 800 :])

    def test_attack_determinism(self):
        spec = corpus.default_attacks()["T02"]
        wave = clean_tone(seed=908)
        a = corpus.apply_attack(wave, spec, RngStream(48).derive("x"))
        b = corpus.apply_attack(wave, spec, RngStream(48).derive("x"))
        np.testing.assert_array_equal(a, b)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            corpus.AttackSpec("T99", "reverb", {}).validate()
        with pytest.raises(ConfigError):
            corpus.AttackSpec("T01", "bitcrush", {"bits": ("int", 6, 2)}).validate()
        with pytest.raises(ConfigError):
            corpus.AttackSpec("T01", "bitcrush", {"bits": ("choice", ())}).validate()

    def test_waveform_validation(self):
        spec = corpus.default_attacks()["T01"]
        with pytest.raises(InputError):
            corpus.apply_attack(np.zeros((2, 100)), spec, RngStream(1))

    @pytest.mark.parametrize("attack_id", sorted(corpus.default_attacks()))
    def test_default_attacks_audible(self, attack_id):
        # every shipped attack must change the waveform and land below
        # 40 dB SNR: spoofs are audible degradations, not label noise
        spec = corpus.default_attacks()[attack_id]
        worst = -np.inf
        for i in range(25):
            rng = RngStream(490 + i).derive("aud", attack_id)
            wave = corpus.synth_bonafide(rng, 1.5)
            out = corpus.apply_attack(wave, spec, rng)
            worst = max(worst, corpus.snr_db(wave, out))
        assert worst < 40.0

    def test_snr_db(self):
        clean = np.ones(100)
        assert corpus.snr_db(clean, clean) == np.inf
        noisy = clean + 0.1
        assert corpus.snr_db(clean, noisy) == pytest.approx(20.0, abs=1e-9)


class TestManifest:
    def test_default_roundtrip(self):
        m = corpus.default_manifest()
        again = corpus.manifest_from_dict(json.loads(m.to_json()))
        assert again == m
        assert again.fingerprint() == m.fingerprint()

    def test_default_counts(self):
        m = corpus.default_manifest()
        assert m.splits["train"].n_bonafide == 300
        assert m.splits["train"].n_spoof == 2700
        assert m.splits["eval"].attacks == ("T01", "T02", "T03", "T04", "T05", "T06")
        assert m.bonafide_spoof_ratio == (1, 9)

    def test_ood_condition_enforced(self):
        m = corpus.default_manifest()
        bad_splits = dict(m.splits)
        bad_splits["eval"] = corpus.SplitSpec(10, 90, ("T01", "T02", "T03"))
        with pytest.raises(ConfigError, match="OOD"):
            corpus.CorpusManifest(splits=bad_splits).validate()

    def test_unknown_fields_rejected(self):
        payload = json.loads(corpus.default_manifest().to_json())
        payload["codec"] = "opus"
        with pytest.raises(ConfigError):
            corpus.manifest_from_dict(payload)
        payload = json.loads(corpus.default_manifest().to_json())
        payload["splits"]["train"]["noise"] = 1
        with pytest.raises(ConfigError):
            corpus.manifest_from_dict(payload)

    def test_validation_errors(self):
        m = corpus.default_manifest()
        with pytest.raises(ConfigError):
            corpus.CorpusManifest(sample_rate=8000, splits=dict(m.splits)).validate()
        with pytest.raises(ConfigError):
            corpus.CorpusManifest(n_speakers=2, splits=dict(m.splits)).validate()
        with pytest.raises(ConfigError):
            corpus.CorpusManifest(duration_range=(0.0, 1.0), splits=dict(m.splits)).validate()
        missing = {k: v for k, v in m.splits.items() if k != "dev"}
        with pytest.raises(ConfigError):
            corpus.CorpusManifest(splits=missing).validate()

    def test_load_manifest_bad_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            corpus.load_manifest(path)


class TestPlanning:
    def test_counts_and_layout(self):
        m = corpus.default_manifest()
        records = corpus.plan_split(m, "eval")
        assert len(records) == 1200
        keys = [r.key for r in records]
        assert keys.count("bonafide") == 120
        assert keys.count("spoof") == 1080
        # attacks cycle over the spoof block, so counts are balanced
        per_attack = {a: 0 for a in m.splits["eval"].attacks}
        for r in records:
            if r.key == "spoof":
                per_attack[r.attack_id] += 1
        assert set(per_attack.values()) == {180}

    def test_unique_ids_and_prefixes(self):
        m = corpus.default_manifest()
        for split, prefix in (("train", "TRN"), ("dev", "DEV"), ("eval", "EVL")):
            records = corpus.plan_split(m, split)
            ids = [r.utt_id for r in records]
            assert len(set(ids)) == len(ids)
            assert all(u.startswith(prefix + "_") for u in ids)

    def test_speaker_pools_disjoint(self):
        m = corpus.default_manifest()
        pools = corpus._speaker_pools(m)
        assert len(pools["train"]) == 24
        all_ids = pools["train"] + pools["dev"] + pools["eval"]
        assert len(set(all_ids)) == m.n_speakers


class TestGeneratedCorpus:
    def test_layout_and_protocol_agreement(self, tiny_corpus):
        assert (tiny_corpus / "manifest.json").exists()
        for split in corpus.SPLITS:
            records = corpus.read_protocol(tiny_corpus / "protocols" / f"{split}.txt")
            wavs = sorted(p.name for p in (tiny_corpus / "wav" / split).iterdir())
            assert wavs == sorted(f"{r.utt_id}.wav" for r in records)

    def test_wav_contents_match_renderer(self, tiny_corpus):
        manifest = corpus.load_manifest(tiny_corpus / "manifest.json")
        records = corpus.plan_split(manifest, "dev")
        for index in (0, len(records) - 1):
            record = records[index]
            expected = corpus.render_trial(manifest, "dev", index, record)
            got, rate = read_wav(tiny_corpus / "wav" / "dev" / f"{record.utt_id}.wav")
            assert rate == SR
            assert np.max(np.abs(got - expected)) <= 0.5 / 32767.0 + 1e-12

    def test_regeneration_is_byte_identical(self, tmp_path):
        manifest = corpus.CorpusManifest(
            master_seed=55,
            n_speakers=6,
            duration_range=(0.5, 0.8),
            splits={
                "train": corpus.SplitSpec(2, 4, ("T01",)),
                "dev": corpus.SplitSpec(2, 4, ("T01",)),
                "eval": corpus.SplitSpec(2, 4, ("T01", "T05")),
            },
        ).validate()
        first, second = tmp_path / "one", tmp_path / "two"
        corpus.generate_corpus(manifest, first)
        corpus.generate_corpus(manifest, second)
        files_a = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel

    def test_energy_carries_no_label(self, tiny_corpus):
        # classify eval trials by mean power at the best threshold: must
        # stay near chance, far above an EER of 20%
        from fadel.metrics import eer_from_scores

        records = corpus.read_protocol(tiny_corpus / "protocols" / "eval.txt")
        powers, labels = [], []
        for r in records:
            wave, _ = read_wav(tiny_corpus / "wav" / "eval" / f"{r.utt_id}.wav")
            powers.append(float(np.mean(wave**2)))
            labels.append(1 if r.key == "bonafide" else 0)
        powers = np.asarray(powers)
        labels = np.asarray(labels)
        eer, _ = eer_from_scores(powers[labels == 1], powers[labels == 0])
        eer = min(eer, 100.0 - eer)  # threshold direction is free
        assert eer > 20.0


class TestProtocolIo:
    def test_roundtrip(self, tmp_path):
        records = [
            corpus.TrialRecord("SP01", "TRN_000001", "-", "bonafide"),
            corpus.TrialRecord("SP02", "TRN_000002", "T03", "spoof"),
        ]
        path = tmp_path / "p.txt"
        corpus.write_protocol(path, records)
        assert corpus.read_protocol(path) == records

    def test_five_column_format(self, tmp_path):
        path = tmp_path / "p.txt"
        corpus.write_protocol(path, [corpus.TrialRecord("SP01", "X_1", "T01", "spoof")])
        assert path.read_text(encoding="utf-8") == "SP01 X_1 - T01 spoof\n"

    def test_column_count_enforced(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("SP01 X_1 - T01\n", encoding="utf-8")
        with pytest.raises(InputError, match="5 columns"):
            corpus.read_protocol(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("SP01 X_1 - T01 spoof\nSP01 X_1 - T01 spoof\n", encoding="utf-8")
        with pytest.raises(InputError, match="duplicate"):
            corpus.read_protocol(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("\n\n", encoding="utf-8")
        with pytest.raises(InputError, match="empty"):
            corpus.read_protocol(path)

    def test_key_attack_consistency(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("SP01 X_1 - T01 bonafide\n", encoding="utf-8")
        with pytest.raises(InputError):
            corpus.read_protocol(path)
