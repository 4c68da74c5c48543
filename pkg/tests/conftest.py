"""Shared fixtures: corpora, features, and trained detectors.

Everything heavyweight is session-scoped and lazy, so running a single
test module never pays for work it does not use.  The default corpus and
its six trained detectors back the end-to-end checks; the tiny corpus
keeps the command-line tests fast.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from fadel import cli, corpus, features
from fadel.estimator import FadelClassifier

DEFAULT_SEEDS = (1, 2, 3)


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The shipped default corpus, generated once per test session."""
    root = tmp_path_factory.mktemp("corpus-default")
    corpus.generate_corpus(corpus.default_manifest(), root)
    return root


@pytest.fixture(scope="session")
def default_splits(default_corpus):
    """{split: (records, features, labels)} for the default corpus."""
    config = features.FeatureConfig()
    return {
        split: cli._load_split(default_corpus, split, config)
        for split in corpus.SPLITS
    }


@pytest.fixture(scope="session")
def default_models(default_splits):
    """Detectors for both heads over the default seeds, with fit times.

    Returns {(head, seed): (estimator, fit_seconds)} using the shipped
    default hyperparameters.
    """
    _, x_train, y_train = default_splits["train"]
    _, x_dev, y_dev = default_splits["dev"]
    out = {}
    for head in ("baseline-softmax", "fadel"):
        for seed in DEFAULT_SEEDS:
            est = FadelClassifier(head=head, random_state=seed)
            started = time.perf_counter()
            est.fit(x_train, y_train, eval_set=(x_dev, y_dev))
            out[(head, seed)] = (est, time.perf_counter() - started)
    return out


TINY_MANIFEST = corpus.CorpusManifest(
    master_seed=7,
    n_speakers=6,
    duration_range=(0.6, 1.2),
    splits={
        "train": corpus.SplitSpec(12, 48, ("T01", "T02")),
        "dev": corpus.SplitSpec(8, 24, ("T01", "T02")),
        "eval": corpus.SplitSpec(8, 32, ("T01", "T02", "T04", "T05")),
    },
)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A small corpus for command-line round trips."""
    root = tmp_path_factory.mktemp("corpus-tiny")
    corpus.generate_corpus(TINY_MANIFEST, root)
    return root


TINY_TRAIN = {
    "epochs": 4,
    "batch_size": 16,
    "hidden_dims": [8],
    "learning_rate": 0.01,
}


@pytest.fixture(scope="session")
def tiny_experiment(tiny_corpus, tmp_path_factory):
    """Config file + completed `train` run on the tiny corpus.

    Returns a dict with the config path, run directory, and the
    checkpoint/log paths per seed for the fadel head.
    """
    base = tmp_path_factory.mktemp("tiny-exp")
    run_dir = base / "runs"
    config_path = base / "exp.json"
    config_path.write_text(
        json.dumps(
            {
                "corpus_dir": str(tiny_corpus),
                "out_dir": str(run_dir),
                "head": "fadel",
                "activation": "softplus",
                "seeds": [1, 2],
                "train": TINY_TRAIN,
            }
        ),
        encoding="utf-8",
    )
    assert cli.main(["train", "--config", str(config_path)]) == 0
    return {
        "config": config_path,
        "run_dir": run_dir,
        "corpus": tiny_corpus,
        "checkpoints": {s: run_dir / f"fadel-softplus-seed{s}.npz" for s in (1, 2)},
        "logs": {s: run_dir / f"fadel-softplus-seed{s}-log.csv" for s in (1, 2)},
    }


def rel_err(approx: np.ndarray, exact: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Elementwise relative error with a shared denominator floor."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(approx), np.abs(exact)), floor)
    return np.abs(approx - exact) / denom
