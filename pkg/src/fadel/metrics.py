"""Anti-spoofing evaluation: EER, min t-DCF, histograms, correlations.

Detection scores are "higher means more bonafide".  Both threshold-swept
metrics consider every candidate threshold: the midpoints between
consecutive sorted unique scores plus the two infinities, so they agree
exactly with an exhaustive sweep and are invariant under any strictly
increasing warp of the scores.

The tandem cost follows the revised t-DCF model: with a fixed ASV
operating point, the cost of operating the CM at threshold s is

    tDCF(s) = C0 + C1 * P_miss_cm(s) + C2 * P_fa_cm(s),

    C0 = P_tar * C_miss * P_miss_asv + P_non * C_fa * P_fa_asv
    C1 = P_tar * C_miss - C0
    C2 = P_spoof * C_fa_spoof * (1 - P_miss_spoof_asv)

normalized by C0 + min(C1, C2).  Priors split the non-spoof mass 99:1
between targets and non-targets, the ASVspoof2019 convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TrialRecord
from .errors import ConfigError, InputError
from .ioutil import atomic_path


@dataclass(frozen=True)
class AsvOperatingPoint:
    """Fixed ASV error rates plus priors and costs of the tandem model."""

    p_spoof: float = 0.05
    c_miss: float = 1.0
    c_fa: float = 10.0
    c_fa_spoof: float = 10.0
    p_miss_asv: float = 0.01
    p_fa_asv: float = 0.01
    p_miss_spoof_asv: float = 0.5

    def validate(self) -> "AsvOperatingPoint":
        rates = {
            "p_spoof": self.p_spoof,
            "p_miss_asv": self.p_miss_asv,
            "p_fa_asv": self.p_fa_asv,
            "p_miss_spoof_asv": self.p_miss_spoof_asv,
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name, value in (("c_miss", self.c_miss), ("c_fa", self.c_fa), ("c_fa_spoof", self.c_fa_spoof)):
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        return self

    def tandem_constants(self) -> tuple:
        """(C0, C1, C2) of the revised tandem cost model."""
        self.validate()
        p_tar = (1.0 - self.p_spoof) * 0.99
        p_non = (1.0 - self.p_spoof) * 0.01
        c0 = p_tar * self.c_miss * self.p_miss_asv + p_non * self.c_fa * self.p_fa_asv
        c1 = p_tar * self.c_miss - c0
        c2 = self.p_spoof * self.c_fa_spoof * (1.0 - self.p_miss_spoof_asv)
        if c1 <= 0 or c2 <= 0:
            raise ConfigError(
                f"degenerate tandem cost model: C1={c1:.6g}, C2={c2:.6g} must both be positive"
            )
        return c0, c1, c2

    def to_dict(self) -> dict:
        return {
            "p_spoof": self.p_spoof,
            "c_miss": self.c_miss,
            "c_fa": self.c_fa,
            "c_fa_spoof": self.c_fa_spoof,
            "p_miss_asv": self.p_miss_asv,
            "p_fa_asv": self.p_fa_asv,
            "p_miss_spoof_asv": self.p_miss_spoof_asv,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AsvOperatingPoint":
        allowed = set(cls().to_dict())
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"ASV operating point has unknown fields: {sorted(unknown)}")
        return cls(**payload).validate()


def _split_scores(records) -> tuple:
    bona, spoof = [], []
    for rec in records:
        if rec.score is None:
            raise InputError(f"trial {rec.utt_id} has no score")
        (bona if rec.key == "bonafide" else spoof).append(rec.score)
    return np.asarray(bona, dtype=np.float64), np.asarray(spoof, dtype=np.float64)


def _check_two_classes(bona: np.ndarray, spoof: np.ndarray) -> None:
    if bona.size == 0 or spoof.size == 0:
        raise InputError("score set must contain at least one bonafide and one spoof trial")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise InputError("scores must be finite")


def candidate_thresholds(bona: np.ndarray, spoof: np.ndarray) -> np.ndarray:
    """Midpoints of sorted unique pooled scores, plus -inf and +inf."""
    uniq = np.unique(np.concatenate([bona, spoof]))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def detection_rates(bona: np.ndarray, spoof: np.ndarray, thresholds: np.ndarray) -> tuple:
    """P_miss and P_fa at each threshold, by exact counting.

    A trial is accepted as bonafide iff score >= threshold, so
    P_miss = #(bona < t) / #bona and P_fa = #(spoof >= t) / #spoof.
    """
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    p_miss = np.searchsorted(bona_sorted, thresholds, side="left") / bona.size
    p_fa = (spoof.size - np.searchsorted(spoof_sorted, thresholds, side="left")) / spoof.size
    return p_miss, p_fa


def eer_from_scores(bona, spoof) -> tuple:
    """(EER percent, threshold) minimizing |P_miss - P_fa|.

    Ties break toward the lower threshold; the rate reported is the
    mid-point (P_miss + P_fa) / 2 at the chosen threshold.
    """
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    _check_two_classes(bona, spoof)
    thresholds = candidate_thresholds(bona, spoof)
    p_miss, p_fa = detection_rates(bona, spoof, thresholds)
    idx = int(np.argmin(np.abs(p_miss - p_fa)))
    return 100.0 * (p_miss[idx] + p_fa[idx]) / 2.0, float(thresholds[idx])


def eer(records) -> tuple:
    """EER of a list of scored TrialRecords; see :func:`eer_from_scores`."""
    return eer_from_scores(*_split_scores(records))


def min_tdcf_from_scores(bona, spoof, asv: AsvOperatingPoint | None = None) -> tuple:
    """(min normalized t-DCF, threshold) for a fixed ASV operating point."""
    asv = asv or AsvOperatingPoint()
    c0, c1, c2 = asv.tandem_constants()
    bona = np.asarray(bona, dtype=np.float64)
    spoof = np.asarray(spoof, dtype=np.float64)
    _check_two_classes(bona, spoof)
    thresholds = candidate_thresholds(bona, spoof)
    p_miss, p_fa = detection_rates(bona, spoof, thresholds)
    norm = (c0 + c1 * p_miss + c2 * p_fa) / (c0 + min(c1, c2))
    idx = int(np.argmin(norm))
    return min(float(norm[idx]), 1.0), float(thresholds[idx])


def min_tdcf(records, asv: AsvOperatingPoint | None = None) -> tuple:
    """min t-DCF of a list of scored TrialRecords."""
    bona, spoof = _split_scores(records)
    return min_tdcf_from_scores(bona, spoof, asv)


def score_histogram(scores, n_bins: int = 20) -> np.ndarray:
    """Counts over ``n_bins`` equal bins of [0, 1].

    Bins are left-closed; the last bin also includes 1.0.  Scores outside
    [0, 1] are an error: histograms here are over probabilities.
    """
    s = np.asarray(scores, dtype=np.float64)
    if n_bins < 1:
        raise InputError("n_bins must be >= 1")
    if s.size and (not np.all(np.isfinite(s)) or s.min() < 0.0 or s.max() > 1.0):
        raise InputError("histogram scores must lie in [0, 1]")
    edges = np.arange(n_bins + 1) / n_bins
    idx = np.searchsorted(edges, s, side="right") - 1
    idx = np.minimum(idx, n_bins - 1)  # folds the score 1.0 into the last bin
    counts = np.zeros(n_bins, dtype=np.int64)
    np.add.at(counts, idx, 1)
    return counts


@dataclass(frozen=True)
class AttackStats:
    attack_id: str
    n_trials: int
    mean_uncertainty: float
    eer: float


@dataclass(frozen=True)
class PerAttackReport:
    rows: tuple
    pearson: float | None
    spearman: float | None


def pearson_correlation(x, y) -> float | None:
    """Pearson r, or None when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise InputError("correlation needs two equal-length vectors of >= 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float((dx**2).sum()) * float((dy**2).sum()))
    if denom == 0.0:
        return None
    return float((dx * dy).sum() / denom)


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_correlation(x, y) -> float | None:
    """Spearman rho via Pearson on average ranks; None if degenerate."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise InputError("correlation needs two equal-length vectors of >= 2 points")
    return pearson_correlation(_average_ranks(x), _average_ranks(y))


def per_attack_analysis(records) -> PerAttackReport:
    """Per-attack EER (vs all bonafide trials) and mean uncertainty.

    Requires uncertainties on every spoof trial and at least two distinct
    attack ids.  Attacks are reported in id order and never excluded,
    however poorly they correlate.
    """
    bona_scores = []
    by_attack: dict = {}
    for rec in records:
        if rec.score is None:
            raise InputError(f"trial {rec.utt_id} has no score")
        if rec.key == "bonafide":
            bona_scores.append(rec.score)
            continue
        if rec.uncertainty is None:
            raise InputError(
                f"trial {rec.utt_id} has no uncertainty; per-attack analysis needs evidential scores"
            )
        by_attack.setdefault(rec.attack_id, []).append(rec)
    if len(by_attack) < 2:
        raise InputError("per-attack analysis needs >= 2 distinct attack ids")
    if not bona_scores:
        raise InputError("per-attack analysis needs bonafide trials to score attacks against")
    bona = np.asarray(bona_scores, dtype=np.float64)
    rows = []
    for attack_id in sorted(by_attack):
        recs = by_attack[attack_id]
        spoof = np.asarray([r.score for r in recs], dtype=np.float64)
        attack_eer, _ = eer_from_scores(bona, spoof)
        mean_u = float(np.mean([r.uncertainty for r in recs]))
        rows.append(AttackStats(attack_id, len(recs), mean_u, attack_eer))
    mean_us = [r.mean_uncertainty for r in rows]
    eers = [r.eer for r in rows]
    return PerAttackReport(tuple(rows), pearson_correlation(mean_us, eers), spearman_correlation(mean_us, eers))


@dataclass
class MetricsReport:
    """Everything one evaluation produces, JSON-serializable."""

    n_bonafide: int
    n_spoof: int
    eer: float
    eer_threshold: float
    min_tdcf: float
    min_tdcf_threshold: float
    n_bins: int = 20
    histogram_bonafide: list | None = None
    histogram_spoof: list | None = None
    per_attack: list = field(default_factory=list)
    pearson: float | None = None
    spearman: float | None = None
    has_uncertainty: bool = False

    def to_dict(self) -> dict:
        return {
            "n_bonafide": self.n_bonafide,
            "n_spoof": self.n_spoof,
            "eer_percent": self.eer,
            "eer_threshold": self.eer_threshold,
            "min_tdcf": self.min_tdcf,
            "min_tdcf_threshold": self.min_tdcf_threshold,
            "n_bins": self.n_bins,
            "histogram_bonafide": self.histogram_bonafide,
            "histogram_spoof": self.histogram_spoof,
            "per_attack": self.per_attack,
            "uncertainty_eer_pearson": self.pearson,
            "uncertainty_eer_spearman": self.spearman,
            "has_uncertainty": self.has_uncertainty,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        return cls(
            n_bonafide=payload["n_bonafide"],
            n_spoof=payload["n_spoof"],
            eer=payload["eer_percent"],
            eer_threshold=payload["eer_threshold"],
            min_tdcf=payload["min_tdcf"],
            min_tdcf_threshold=payload["min_tdcf_threshold"],
            n_bins=payload.get("n_bins", 20),
            histogram_bonafide=payload.get("histogram_bonafide"),
            histogram_spoof=payload.get("histogram_spoof"),
            per_attack=payload.get("per_attack", []),
            pearson=payload.get("uncertainty_eer_pearson"),
            spearman=payload.get("uncertainty_eer_spearman"),
            has_uncertainty=payload.get("has_uncertainty", False),
        )


def compute_report(records, asv: AsvOperatingPoint | None = None, n_bins: int = 20) -> MetricsReport:
    """EER + min t-DCF always; histograms when scores are probabilities;
    per-attack correlation when uncertainties are present."""
    records = list(records)
    bona, spoof = _split_scores(records)
    _check_two_classes(bona, spoof)
    eer_value, eer_thr = eer_from_scores(bona, spoof)
    tdcf_value, tdcf_thr = min_tdcf_from_scores(bona, spoof, asv)
    report = MetricsReport(
        n_bonafide=int(bona.size),
        n_spoof=int(spoof.size),
        eer=eer_value,
        eer_threshold=eer_thr,
        min_tdcf=tdcf_value,
        min_tdcf_threshold=tdcf_thr,
        n_bins=n_bins,
    )
    pooled = np.concatenate([bona, spoof])
    if pooled.min() >= 0.0 and pooled.max() <= 1.0:
        report.histogram_bonafide = score_histogram(bona, n_bins).tolist()
        report.histogram_spoof = score_histogram(spoof, n_bins).tolist()
    spoof_recs = [r for r in records if r.key == "spoof"]
    report.has_uncertainty = bool(spoof_recs) and all(r.uncertainty is not None for r in spoof_recs)
    if report.has_uncertainty and len({r.attack_id for r in spoof_recs}) >= 2:
        attack_report = per_attack_analysis(records)
        report.per_attack = [
            {
                "attack_id": row.attack_id,
                "n_trials": row.n_trials,
                "mean_uncertainty": row.mean_uncertainty,
                "eer": row.eer,
            }
            for row in attack_report.rows
        ]
        report.pearson = attack_report.pearson
        report.spearman = attack_report.spearman
    return report


def aggregate_seeds(reports) -> dict:
    """Average and best (minimum) EER / min t-DCF over seed reports."""
    reports = list(reports)
    if not reports:
        raise InputError("aggregate_seeds needs at least one report")
    eers = [r.eer for r in reports]
    tdcfs = [r.min_tdcf for r in reports]
    return {
        "n_seeds": len(reports),
        "eer_percent": {"avg": float(np.mean(eers)), "best": float(np.min(eers)), "per_seed": eers},
        "min_tdcf": {"avg": float(np.mean(tdcfs)), "best": float(np.min(tdcfs)), "per_seed": tdcfs},
    }


# ---------------------------------------------------------------------------
# Score file I/O: `UTT_ID ATTACK_ID KEY SCORE [UNCERTAINTY]`


def write_scores(path, records) -> None:
    """Write a score file; the uncertainty column is all-or-none."""
    records = list(records)
    if not records:
        raise InputError("no records to write")
    with_u = [r.uncertainty is not None for r in records]
    if any(with_u) and not all(with_u):
        raise InputError("either every record has an uncertainty or none does")
    lines = []
    for rec in records:
        if rec.score is None:
            raise InputError(f"trial {rec.utt_id} has no score")
        line = f"{rec.utt_id} {rec.attack_id} {rec.key} {rec.score:.12g}"
        if rec.uncertainty is not None:
            line += f" {rec.uncertainty:.12g}"
        lines.append(line)
    with atomic_path(Path(path)) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path) -> list:
    """Parse a score file, ASVspoof CM 4-column or our 5-column layout."""
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise InputError(f"{path}:{lineno}: expected 4 or 5 columns, got {len(parts)}")
        utt_id, attack_id, key = parts[0], parts[1], parts[2]
        try:
            score = float(parts[3])
            uncert = float(parts[4]) if len(parts) == 5 else None
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-numeric score column") from exc
        records.append(TrialRecord("-", utt_id, attack_id, key, score, uncert).validate())
    if not records:
        raise InputError(f"{path}: empty score file")
    return records
