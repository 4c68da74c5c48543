"""scikit-learn style wrappers around the detector and the front-end.

:class:`FadelClassifier` exposes the spoof-vs-bonafide detector as a
standard estimator (``fit`` / ``predict`` / ``predict_proba`` /
``decision_function`` plus ``predict_uncertainty`` for the evidential
head), so it composes with pipelines, grid search, and the usual sklearn
validation helpers.  All of the numerics live in :mod:`fadel.net` and
:mod:`fadel.heads`; sklearn supplies only the API plumbing and input
validation.

:class:`LogMelFeatures` is the matching transformer from variable-length
waveforms to fixed 80-dim vectors.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import features as features_mod
from . import heads, net
from .errors import ConfigError, InputError
from .rng import RngStream

# Public head names match the experiment configs; bare internal names are
# accepted as aliases.
_HEAD_ALIASES = {
    "fadel": "evidential",
    "evidential": "evidential",
    "baseline-softmax": "softmax",
    "softmax": "softmax",
}

ESTIMATOR_VERSION = 1


class FadelClassifier(ClassifierMixin, BaseEstimator):
    """Spoof-vs-bonafide MLP detector with a softmax or evidential head.

    Parameters
    ----------
    head : {"fadel", "baseline-softmax"}
        Which output head to train.  "fadel" is the Dirichlet evidence
        head; "baseline-softmax" is weighted cross-entropy.
    activation : {"relu", "softplus", "exponential"}
        Evidence activation (evidential head only).
    hidden_dims : tuple of int
        Hidden layer widths of the MLP backbone.
    epochs, batch_size, learning_rate : training hyperparameters (Adam).
    class_weights : (w_spoof, w_bonafide)
        Loss weights; the default 1:9 compensates the corpus imbalance.
    kl_weight : float
        Strength of the annealed KL(Dir(alpha~) || Dir(1)) regularizer;
        0 disables it.
    kl_anneal_epochs : int
        Epochs over which the KL weight ramps from 0 to ``kl_weight``.
    validation_fraction : float
        Per-class fraction held out for checkpoint selection when no
        ``eval_set`` is passed to :meth:`fit`.
    standardize : bool
        Learn feature mean/std on the training portion and apply them
        everywhere.
    random_state : int
        Seed for init, shuffling, and the validation split.

    Attributes
    ----------
    classes_ : ndarray [0, 1]; 0 = spoof, 1 = bonafide.
    model_ : trained backbone.
    best_epoch_, best_dev_eer_ : checkpoint-selection outcome.
    train_log_ : list of per-epoch (loss, dev EER) entries.
    """

    def __init__(self, head: str = "fadel", activation: str = "softplus",
                 hidden_dims=(64, 64), epochs: int = 100, batch_size: int = 64,
                 learning_rate: float = 5e-4, class_weights=(1.0, 9.0),
                 kl_weight: float = 0.1, kl_anneal_epochs: int = 10,
                 validation_fraction: float = 0.1, standardize: bool = True,
                 random_state: int = 0):
        self.head = head
        self.activation = activation
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.class_weights = class_weights
        self.kl_weight = kl_weight
        self.kl_anneal_epochs = kl_anneal_epochs
        self.validation_fraction = validation_fraction
        self.standardize = standardize
        self.random_state = random_state

    # -- internals ---------------------------------------------------------

    def _internal_head(self) -> str:
        if self.head not in _HEAD_ALIASES:
            raise ConfigError(f"unknown head {self.head!r}; choose from ('fadel', 'baseline-softmax')")
        return _HEAD_ALIASES[self.head]

    def is_evidential(self) -> bool:
        """True when predictions carry Dirichlet uncertainty estimates."""
        return self._internal_head() == "evidential"

    def _train_config(self) -> net.TrainConfig:
        return net.TrainConfig(
            head=self._internal_head(),
            activation=self.activation,
            hidden_dims=tuple(int(d) for d in self.hidden_dims),
            epochs=int(self.epochs),
            batch_size=int(self.batch_size),
            learning_rate=float(self.learning_rate),
            class_weights=tuple(float(w) for w in self.class_weights),
            kl_weight=float(self.kl_weight),
            kl_anneal_epochs=int(self.kl_anneal_epochs),
        ).validate()

    def _holdout_split(self, x, y):
        """Per-class deterministic holdout so both classes reach the dev set."""
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in (0, 1) when no eval_set is given")
        rng = RngStream(int(self.random_state)).derive("valsplit")
        dev_mask = np.zeros(y.shape[0], dtype=bool)
        for cls in (0, 1):
            idx = np.nonzero(y == cls)[0]
            n_dev = max(1, int(round(self.validation_fraction * idx.size)))
            if n_dev >= idx.size:
                raise InputError(f"class {cls} has too few samples ({idx.size}) to hold out a dev set")
            take = rng.derive(cls).permutation(idx.size)[:n_dev]
            dev_mask[idx[take]] = True
        return ~dev_mask, dev_mask

    # -- sklearn API ---------------------------------------------------------

    def fit(self, X, y, eval_set=None):
        """Train on (X, y); select the best epoch on ``eval_set`` or an
        internal per-class holdout.

        ``eval_set`` is an optional (X_dev, y_dev) pair scored each epoch
        with the detection EER.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        labels = set(np.unique(y))
        if not labels <= {0, 1} or len(labels) != 2:
            raise InputError("y must contain both classes, labeled 0 (spoof) and 1 (bonafide)")
        config = self._train_config()

        if eval_set is not None:
            x_dev, y_dev = eval_set
            x_dev, y_dev = check_X_y(x_dev, y_dev, dtype=np.float64)
            y_dev = y_dev.astype(np.int64)
            if x_dev.shape[1] != X.shape[1]:
                raise InputError("eval_set feature dimension differs from X")
            x_tr, y_tr = X, y
        else:
            train_mask, dev_mask = self._holdout_split(X, y)
            x_tr, y_tr = X[train_mask], y[train_mask]
            x_dev, y_dev = X[dev_mask], y[dev_mask]

        if self.standardize:
            mean = x_tr.mean(axis=0)
            std = np.maximum(x_tr.std(axis=0), 1e-8)
        else:
            mean = np.zeros(X.shape[1])
            std = np.ones(X.shape[1])
        self.feature_mean_, self.feature_std_ = mean, std

        result = net.train(
            config,
            (x_tr - mean) / std,
            y_tr,
            (x_dev - mean) / std,
            y_dev,
            seed=int(self.random_state),
        )
        self.model_ = result.model
        self.best_epoch_ = result.best_epoch
        self.best_dev_eer_ = result.best_dev_eer
        self.train_log_ = [
            {"epoch": e.epoch, "train_loss": e.train_loss, "dev_eer": e.dev_eer} for e in result.log
        ]
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _check_input(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"X has {X.shape[1]} features, this estimator was fitted with {self.n_features_in_}")
        return (X - self.feature_mean_) / self.feature_std_

    def _predict_heads(self, X) -> heads.Prediction:
        X = self._check_input(X)  # fitted check before any attribute access
        logits, _ = net.forward(self.model_, X)
        internal = self._internal_head()
        return heads.predict(logits, internal, self.activation if internal == "evidential" else None)

    def predict_proba(self, X) -> np.ndarray:
        """(n, 2) class probabilities: column 0 spoof, column 1 bonafide."""
        return self._predict_heads(X).probs

    def decision_function(self, X) -> np.ndarray:
        """Detection score: predicted bonafide probability."""
        return np.asarray(self._predict_heads(X).bonafide_score)

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)  # runs the fitted check first
        return self.classes_[np.argmax(probs, axis=1)]

    def predict_uncertainty(self, X) -> np.ndarray:
        """Dirichlet uncertainty mass per trial (evidential head only)."""
        if self._internal_head() != "evidential":
            raise InputError("the baseline-softmax head does not produce uncertainty estimates")
        return np.asarray(self._predict_heads(X).uncertainty)

    # -- persistence ---------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        """Write a versioned checkpoint (parameters + config echo)."""
        check_is_fitted(self, "model_")
        meta = {
            "estimator_version": ESTIMATOR_VERSION,
            "params": {
                "head": self.head,
                "activation": self.activation,
                "hidden_dims": list(self.hidden_dims),
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "class_weights": list(self.class_weights),
                "kl_weight": self.kl_weight,
                "kl_anneal_epochs": self.kl_anneal_epochs,
                "validation_fraction": self.validation_fraction,
                "standardize": self.standardize,
                "random_state": self.random_state,
            },
            "n_features_in": int(self.n_features_in_),
            "best_epoch": int(self.best_epoch_),
            "best_dev_eer": float(self.best_dev_eer_),
            "train_log": self.train_log_,
            # JSON float repr round-trips binary64 exactly, so the scaler
            # can ride in the metadata without a separate array member.
            "feature_mean": [float(v) for v in self.feature_mean_],
            "feature_std": [float(v) for v in self.feature_std_],
            "extra": extra_meta or {},
        }
        net.save_checkpoint(path, self.model_, meta)

    @classmethod
    def load(cls, path) -> "FadelClassifier":
        """Reconstruct a fitted estimator from :meth:`save` output."""
        model, meta = net.load_checkpoint(path)
        if meta.get("estimator_version") != ESTIMATOR_VERSION:
            raise ConfigError(f"checkpoint {path} was not written by this estimator version")
        params = dict(meta["params"])
        # JSON turned the tuple-valued params into lists; restore them so a
        # loaded estimator round-trips get_params() exactly.
        params["hidden_dims"] = tuple(params["hidden_dims"])
        params["class_weights"] = tuple(params["class_weights"])
        est = cls(**params)
        est.model_ = model
        est.best_epoch_ = meta["best_epoch"]
        est.best_dev_eer_ = meta["best_dev_eer"]
        est.train_log_ = meta["train_log"]
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = meta["n_features_in"]
        est.feature_mean_ = np.asarray(meta["feature_mean"], dtype=np.float64)
        est.feature_std_ = np.asarray(meta["feature_std"], dtype=np.float64)
        est.meta_ = meta
        return est


class LogMelFeatures(TransformerMixin, BaseEstimator):
    """Transformer from 1-D waveforms to log-mel statistics vectors.

    Accepts a list of variable-length waveforms (or a 2-D array of
    equal-length ones) and returns an (n, 2 * n_mels) matrix.  Stateless:
    ``fit`` only validates the configuration.
    """

    def __init__(self, sample_rate: int = 16000, frame_len: int = 512, hop: int = 256,
                 n_mels: int = 40, fmin: float = 20.0, fmax: float = 8000.0,
                 log_floor: float = 1e-10):
        self.sample_rate = sample_rate
        self.frame_len = frame_len
        self.hop = hop
        self.n_mels = n_mels
        self.fmin = fmin
        self.fmax = fmax
        self.log_floor = log_floor

    def _config(self) -> features_mod.FeatureConfig:
        return features_mod.FeatureConfig(
            sample_rate=int(self.sample_rate),
            frame_len=int(self.frame_len),
            hop=int(self.hop),
            n_mels=int(self.n_mels),
            fmin=float(self.fmin),
            fmax=float(self.fmax),
            log_floor=float(self.log_floor),
        ).validate()

    def fit(self, X=None, y=None):
        self._config()
        self.n_features_out_ = self._config().dim
        return self

    def transform(self, X) -> np.ndarray:
        config = self._config()
        if isinstance(X, np.ndarray) and X.ndim == 2:
            waves = list(X)
        elif isinstance(X, (list, tuple)):
            waves = X
        else:
            raise InputError("X must be a list of 1-D waveforms or a 2-D array")
        return features_mod.extract_batch(waves, config)
