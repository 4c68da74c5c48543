"""Command-line entry point for reproducible spoof-detection experiments.

Subcommands cover the full pipeline:

* ``gen-data``  render the synthetic corpus (WAVs + protocols + manifest)
* ``train``     train one detector checkpoint per seed from a config file
* ``evaluate``  score a checkpoint on a protocol; or aggregate seed reports
* ``analyze``   histogram / per-attack scatter / correlation summaries
* ``ablation``  sweep the evidence activations over all seeds

Everything is deterministic: reruns with identical inputs produce
byte-identical outputs (no timestamps are ever written).  Exit codes: 0
success, 2 configuration or input problems, 3 I/O failures, 4 numeric
failures.

The experiment config is JSON::

    {
      "corpus_dir": "corpus",            // corpus root (or its manifest.json)
      "out_dir": "runs/exp1",
      "head": "fadel",                   // or "baseline-softmax"
      "activation": "softplus",          // fadel only: relu|softplus|exponential
      "seeds": [1, 2, 3],
      "features": { ... },               // optional FeatureConfig overrides
      "train": { "epochs": 100, ... },   // optional training overrides
      "asv": { "p_spoof": 0.05, ... }    // optional t-DCF operating point
    }

Paths inside the config resolve relative to the config file itself.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import features as features_mod
from . import metrics as metrics_mod
from .audio_io import read_wav
from .errors import ConfigError, InputError, NumericError, VersionError
from .estimator import FadelClassifier
from .heads import ACTIVATIONS
from .ioutil import write_text_atomic
from .metrics import AsvOperatingPoint, MetricsReport, aggregate_seeds, compute_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

HEAD_CHOICES = ("baseline-softmax", "fadel")
# Fixed ablation row order; tests and downstream tables rely on it.
ABLATION_ACTIVATIONS = ("relu", "exponential", "softplus")

_CONFIG_FIELDS = {"corpus_dir", "out_dir", "head", "activation", "seeds", "features", "train", "asv"}
_TRAIN_FIELDS = {
    "hidden_dims",
    "epochs",
    "batch_size",
    "learning_rate",
    "class_weights",
    "kl_weight",
    "kl_anneal_epochs",
}


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: corpus + features + head + training + seeds + output."""

    corpus_dir: Path
    out_dir: Path
    head: str
    activation: str
    seeds: tuple
    features: features_mod.FeatureConfig
    train: dict
    asv: AsvOperatingPoint


def _resolve(base: Path, value) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_experiment_config(path, seed_override=None, out_override=None) -> ExperimentConfig:
    """Parse and validate an experiment config file.

    ``--seed`` and ``--out`` values override the file; unknown fields are
    rejected by name.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    unknown = set(payload) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"experiment config has unknown fields: {sorted(unknown)}")

    if "corpus_dir" not in payload:
        raise ConfigError("experiment config needs a corpus_dir")
    base = path.parent
    corpus_path = _resolve(base, payload["corpus_dir"])
    # Accepts either the corpus root or its manifest.json.
    corpus_dir = corpus_path.parent if corpus_path.suffix == ".json" else corpus_path

    if out_override is not None:
        out_dir = Path(out_override)
    elif "out_dir" in payload:
        out_dir = _resolve(base, payload["out_dir"])
    else:
        raise ConfigError("experiment config needs an out_dir (or pass --out)")

    head = payload.get("head", "fadel")
    if head not in HEAD_CHOICES:
        raise ConfigError(f"unknown head {head!r}; choose from {HEAD_CHOICES}")
    activation = payload.get("activation", "softplus")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}; choose from {ACTIVATIONS}")

    seeds = seed_override if seed_override else payload.get("seeds", [1, 2, 3])
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("seeds must be a non-empty list")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must all be integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")

    features_block = payload.get("features", {})
    if not isinstance(features_block, dict):
        raise ConfigError("the features block must be an object")
    train_block = payload.get("train", {})
    if not isinstance(train_block, dict):
        raise ConfigError("the train block must be an object")
    unknown = set(train_block) - _TRAIN_FIELDS
    if unknown:
        raise ConfigError(f"train config has unknown fields: {sorted(unknown)}")
    asv_block = payload.get("asv", {})
    if not isinstance(asv_block, dict):
        raise ConfigError("the asv block must be an object")

    return ExperimentConfig(
        corpus_dir=corpus_dir,
        out_dir=out_dir,
        head=head,
        activation=activation,
        seeds=tuple(seeds),
        features=features_mod.FeatureConfig.from_dict(features_block),
        train=dict(train_block),
        asv=AsvOperatingPoint.from_dict(asv_block),
    )


def _estimator_params(config: ExperimentConfig, seed: int) -> dict:
    params = dict(head=config.head, activation=config.activation, random_state=seed)
    overrides = dict(config.train)
    if "hidden_dims" in overrides:
        overrides["hidden_dims"] = tuple(overrides["hidden_dims"])
    if "class_weights" in overrides:
        overrides["class_weights"] = tuple(overrides["class_weights"])
    params.update(overrides)
    return params


# ---------------------------------------------------------------------------
# Shared pipeline pieces


def _features_for_records(wav_dir: Path, records, config: features_mod.FeatureConfig,
                          cache_path: Path | None = None) -> np.ndarray:
    """Feature matrix aligned with ``records``, via the cache when fresh."""
    utt_ids = [rec.utt_id for rec in records]
    if cache_path is not None:
        cached = features_mod.load_feature_cache(cache_path, config)
        if cached is not None and cached[0] == utt_ids:
            return cached[1]
    waves = []
    for rec in records:
        samples, rate = read_wav(Path(wav_dir) / f"{rec.utt_id}.wav")
        if rate != config.sample_rate:
            raise InputError(
                f"{rec.utt_id}.wav has sample rate {rate}, features expect {config.sample_rate}"
            )
        waves.append(samples)
    feats = features_mod.extract_batch(waves, config)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        features_mod.save_feature_cache(cache_path, utt_ids, feats, config)
    return feats


def _load_split(corpus_dir: Path, split: str, config: features_mod.FeatureConfig):
    """(records, features, labels) for one corpus split, feature-cached."""
    records = corpus_mod.read_protocol(corpus_dir / "protocols" / f"{split}.txt")
    cache_path = corpus_dir / "cache" / f"{split}-{config.fingerprint()}.npz"
    feats = _features_for_records(corpus_dir / "wav" / split, records, config, cache_path)
    labels = np.array([1 if rec.key == "bonafide" else 0 for rec in records], dtype=np.int64)
    return records, feats, labels


def _write_train_log(path: Path, log: list) -> None:
    lines = ["epoch,train_loss,dev_eer_percent"]
    for entry in log:
        lines.append(f"{entry['epoch']},{entry['train_loss']:.12g},{entry['dev_eer']:.12g}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def _train_one(config: ExperimentConfig, tag: str, seed: int, manifest,
               x_train, y_train, x_dev, y_dev) -> tuple[FadelClassifier, Path]:
    est = FadelClassifier(**_estimator_params(config, seed))
    est.fit(x_train, y_train, eval_set=(x_dev, y_dev))
    ckpt_path = config.out_dir / f"{tag}-seed{seed}.npz"
    est.save(
        ckpt_path,
        extra_meta={
            "tag": tag,
            "seed": seed,
            "features": config.features.to_dict(),
            "asv": config.asv.to_dict(),
            "corpus_fingerprint": manifest.fingerprint(),
        },
    )
    _write_train_log(config.out_dir / f"{tag}-seed{seed}-log.csv", est.train_log_)
    return est, ckpt_path


def _score_records(est: FadelClassifier, feats: np.ndarray, records) -> list:
    scores = est.decision_function(feats)
    uncertainties = est.predict_uncertainty(feats) if est.is_evidential() else None
    scored = []
    for i, rec in enumerate(records):
        uncert = float(uncertainties[i]) if uncertainties is not None else None
        scored.append(replace(rec, score=float(scores[i]), uncertainty=uncert))
    return scored


def _write_json(path: Path, payload: dict) -> None:
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _format_table(headers, rows) -> str:
    """Fixed-width text table; all cells already strings."""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines.extend(fmt.format(*row) for row in rows)
    return "\n".join(lines)


def _head_tag(config: ExperimentConfig) -> str:
    return config.head if config.head == "baseline-softmax" else f"fadel-{config.activation}"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_data(args) -> int:
    manifest = corpus_mod.load_manifest(args.config) if args.config else corpus_mod.default_manifest()
    all_records = corpus_mod.generate_corpus(manifest, args.out)
    print(f"corpus written to {args.out}")
    for split in corpus_mod.SPLITS:
        records = all_records[split]
        n_bona = sum(1 for rec in records if rec.key == "bonafide")
        print(f"{split}: {n_bona} bonafide + {len(records) - n_bona} spoof")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_experiment_config(args.config, args.seed, args.out)
    manifest = corpus_mod.load_manifest(config.corpus_dir / "manifest.json")
    _, x_train, y_train = _load_split(config.corpus_dir, "train", config.features)
    _, x_dev, y_dev = _load_split(config.corpus_dir, "dev", config.features)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    tag = _head_tag(config)
    for seed in config.seeds:
        est, ckpt_path = _train_one(config, tag, seed, manifest, x_train, y_train, x_dev, y_dev)
        print(
            f"{tag} seed {seed}: best epoch {est.best_epoch_}, "
            f"dev EER {est.best_dev_eer_:.6g}%, checkpoint {ckpt_path}"
        )
    return EXIT_OK


def _evaluate_aggregate(args) -> int:
    reports = [MetricsReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.aggregate]
    summary = aggregate_seeds(reports)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "aggregate.json", summary)
    lines = ["metric,avg,best"]
    rows = []
    for metric in ("eer_percent", "min_tdcf"):
        avg, best = summary[metric]["avg"], summary[metric]["best"]
        lines.append(f"{metric},{avg:.12g},{best:.12g}")
        rows.append((metric, f"{avg:.4f}", f"{best:.4f}"))
    write_text_atomic(out_dir / "aggregate.csv", "\n".join(lines) + "\n")
    print(f"aggregated {summary['n_seeds']} reports")
    print(_format_table(("metric", "avg", "best"), rows))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.aggregate:
        if args.checkpoint or args.corpus_dir or args.protocol or args.wav_dir:
            raise ConfigError("--aggregate cannot be combined with checkpoint evaluation options")
        return _evaluate_aggregate(args)
    if not args.checkpoint:
        raise ConfigError("evaluate needs --checkpoint (or --aggregate)")
    if bool(args.corpus_dir) == bool(args.protocol):
        raise ConfigError("give exactly one of --corpus-dir or --protocol")
    if args.protocol and not args.wav_dir:
        raise ConfigError("--protocol needs --wav-dir pointing at its audio")

    est = FadelClassifier.load(args.checkpoint)
    extra = est.meta_.get("extra", {})
    feat_config = (
        features_mod.FeatureConfig.from_dict(extra["features"])
        if "features" in extra
        else features_mod.FeatureConfig()
    )
    if feat_config.dim != est.n_features_in_:
        raise VersionError(
            f"checkpoint expects {est.n_features_in_}-dim inputs but its feature "
            f"config produces {feat_config.dim}-dim vectors"
        )
    asv = AsvOperatingPoint.from_dict(extra["asv"]) if "asv" in extra else None

    if args.corpus_dir:
        corpus_dir = Path(args.corpus_dir)
        manifest = corpus_mod.load_manifest(corpus_dir / "manifest.json")
        trained_on = extra.get("corpus_fingerprint")
        if trained_on and trained_on != manifest.fingerprint():
            print(
                "warning: checkpoint was trained on a different corpus (manifest fingerprint mismatch)",
                file=sys.stderr,
            )
        records, feats, _ = _load_split(corpus_dir, args.split, feat_config)
        tag = args.split
    else:
        records = corpus_mod.read_protocol(args.protocol)
        feats = _features_for_records(args.wav_dir, records, feat_config)
        tag = Path(args.protocol).stem

    scored = _score_records(est, feats, records)
    report = compute_report(scored, asv=asv, n_bins=args.bins)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = out_dir / f"scores-{tag}.txt"
    report_path = out_dir / f"report-{tag}.json"
    metrics_mod.write_scores(scores_path, scored)
    _write_json(report_path, report.to_dict())

    print(f"trials: {report.n_bonafide} bonafide, {report.n_spoof} spoof")
    print(f"EER: {report.eer:.6g}% (threshold {report.eer_threshold:.6g})")
    print(f"min t-DCF: {report.min_tdcf:.6g} (threshold {report.min_tdcf_threshold:.6g})")
    if report.spearman is not None:
        print(f"uncertainty-EER Spearman: {report.spearman:.6g} over {len(report.per_attack)} attacks")
    print(f"wrote {scores_path} and {report_path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    paths = [Path(p) for p in args.scores]
    if not 1 <= len(paths) <= 2:
        raise ConfigError("analyze takes one score file, or two for comparison mode")
    labels = args.label if args.label else [p.stem for p in paths]
    if len(labels) != len(paths):
        raise ConfigError("--label count must match --scores count")
    if len(set(labels)) != len(labels):
        raise ConfigError("labels must be distinct; pass explicit --label names")
    comparison = len(paths) == 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    hist_lines = ["system,class,bin_lo,bin_hi,count" if comparison else "class,bin_lo,bin_hi,count"]
    summary: dict = {"n_bins": args.bins, "systems": {}}
    printed: list[str] = []

    for path, label in zip(paths, labels):
        records = metrics_mod.read_scores(path)
        has_uncertainty = all(rec.uncertainty is not None for rec in records)
        if args.correlation == "require" and not has_uncertainty:
            raise InputError(
                f"uncertainty analysis requires evidential score files; "
                f"{label} ({path}) has no uncertainty column"
            )
        report = compute_report(records, n_bins=args.bins)
        if report.histogram_bonafide is None:
            raise InputError(
                f"{label} ({path}) has scores outside [0, 1]; analyze expects probability scores"
            )
        for cls, counts in (("bonafide", report.histogram_bonafide), ("spoof", report.histogram_spoof)):
            for i, count in enumerate(counts):
                bin_lo = f"{i / args.bins:.12g}"
                bin_hi = f"{(i + 1) / args.bins:.12g}"
                row = f"{cls},{bin_lo},{bin_hi},{count}"
                hist_lines.append(f"{label},{row}" if comparison else row)

        entry = {
            "scores": str(path),
            "n_bonafide": report.n_bonafide,
            "n_spoof": report.n_spoof,
            "eer_percent": report.eer,
            "min_tdcf": report.min_tdcf,
            "has_uncertainty": has_uncertainty,
        }
        printed.append(f"system {label}: {report.n_bonafide} bonafide, {report.n_spoof} spoof")
        printed.append(f"  EER: {report.eer:.6g}%  min t-DCF: {report.min_tdcf:.6g}")

        if args.correlation != "skip" and has_uncertainty:
            attack_report = metrics_mod.per_attack_analysis(records)
            scatter_path = out_dir / (f"scatter-{label}.csv" if comparison else "scatter.csv")
            scatter_lines = ["attack_id,mean_uncertainty,eer_percent"]
            for row in attack_report.rows:
                scatter_lines.append(f"{row.attack_id},{row.mean_uncertainty:.12g},{row.eer:.12g}")
            write_text_atomic(scatter_path, "\n".join(scatter_lines) + "\n")
            entry["uncertainty_eer_pearson"] = attack_report.pearson
            entry["uncertainty_eer_spearman"] = attack_report.spearman
            entry["scatter_csv"] = scatter_path.name
            spearman = "n/a" if attack_report.spearman is None else f"{attack_report.spearman:.6g}"
            printed.append(
                f"  Spearman(mean uncertainty, attack EER): {spearman} over {len(attack_report.rows)} attacks"
            )
        summary["systems"][label] = entry

    hist_path = out_dir / "histogram.csv"
    write_text_atomic(hist_path, "\n".join(hist_lines) + "\n")
    _write_json(out_dir / "summary.json", summary)
    for line in printed:
        print(line)
    print(f"wrote {hist_path} and {out_dir / 'summary.json'}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    config = load_experiment_config(args.config, args.seed, args.out)
    if config.head == "baseline-softmax":
        raise ConfigError("ablation sweeps evidence activations; the config head must be fadel")
    manifest = corpus_mod.load_manifest(config.corpus_dir / "manifest.json")
    _, x_train, y_train = _load_split(config.corpus_dir, "train", config.features)
    _, x_dev, y_dev = _load_split(config.corpus_dir, "dev", config.features)
    eval_records, x_eval, _ = _load_split(config.corpus_dir, "eval", config.features)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    table_rows = []
    detail = {"seeds": list(config.seeds), "rows": []}
    for activation in ABLATION_ACTIVATIONS:
        act_config = replace(config, activation=activation)
        tag = f"fadel-{activation}"
        reports = []
        for seed in config.seeds:
            est, _ = _train_one(act_config, tag, seed, manifest, x_train, y_train, x_dev, y_dev)
            scored = _score_records(est, x_eval, eval_records)
            report = compute_report(scored, asv=config.asv)
            metrics_mod.write_scores(config.out_dir / f"scores-eval-{tag}-seed{seed}.txt", scored)
            _write_json(config.out_dir / f"report-eval-{tag}-seed{seed}.json", report.to_dict())
            print(f"{tag} seed {seed}: eval EER {report.eer:.6g}%, min t-DCF {report.min_tdcf:.6g}")
            reports.append(report)
        agg = aggregate_seeds(reports)
        detail["rows"].append({"activation": activation, **agg})
        table_rows.append((activation, agg))

    csv_lines = ["activation,avg_eer_percent,best_eer_percent,avg_min_tdcf,best_min_tdcf"]
    text_rows = []
    for activation, agg in table_rows:
        eer_agg, tdcf_agg = agg["eer_percent"], agg["min_tdcf"]
        csv_lines.append(
            f"{activation},{eer_agg['avg']:.12g},{eer_agg['best']:.12g},"
            f"{tdcf_agg['avg']:.12g},{tdcf_agg['best']:.12g}"
        )
        text_rows.append(
            (
                activation,
                f"{eer_agg['avg']:.4f}",
                f"{eer_agg['best']:.4f}",
                f"{tdcf_agg['avg']:.4f}",
                f"{tdcf_agg['best']:.4f}",
            )
        )
    write_text_atomic(config.out_dir / "ablation.csv", "\n".join(csv_lines) + "\n")
    _write_json(config.out_dir / "ablation.json", detail)
    print(_format_table(("activation", "avg EER%", "best EER%", "avg t-DCF", "best t-DCF"), text_rows))
    print(f"wrote {config.out_dir / 'ablation.csv'} and {config.out_dir / 'ablation.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fadel",
        description="Uncertainty-aware fake-audio detection experiments on a synthetic corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render the synthetic corpus to disk")
    p.add_argument("--config", type=Path, help="corpus manifest JSON (default: built-in manifest)")
    p.add_argument("--out", type=Path, required=True, help="corpus output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one checkpoint per seed")
    p.add_argument("--config", type=Path, required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, action="append", help="override config seeds (repeatable)")
    p.add_argument("--out", type=Path, help="override the config output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint, or aggregate seed reports")
    p.add_argument("--checkpoint", type=Path, help="trained checkpoint (.npz)")
    p.add_argument("--corpus-dir", type=Path, help="generated corpus root")
    p.add_argument("--split", choices=corpus_mod.SPLITS, default="eval", help="corpus split to score")
    p.add_argument("--protocol", type=Path, help="protocol file (with --wav-dir) instead of --corpus-dir")
    p.add_argument("--wav-dir", type=Path, help="audio directory for --protocol")
    p.add_argument("--aggregate", type=Path, nargs="+", help="report JSONs to aggregate into avg/best")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="histograms, per-attack scatter, correlation summary")
    p.add_argument("--scores", type=Path, action="append", required=True,
                   help="score file (repeat once more for comparison mode)")
    p.add_argument("--label", action="append", help="system label per score file")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count")
    p.add_argument("--correlation", choices=("auto", "require", "skip"), default="auto",
                   help="per-attack uncertainty analysis: auto when available, require, or skip")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablation", help="sweep evidence activations over all seeds")
    p.add_argument("--config", type=Path, required=True, help="experiment config JSON (head must be fadel)")
    p.add_argument("--seed", type=int, action="append", help="override config seeds (repeatable)")
    p.add_argument("--out", type=Path, help="override the config output directory")
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def console_entry() -> None:
    sys.exit(main())
