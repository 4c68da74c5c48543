"""Uncertainty-aware fake-audio detection on a synthetic spoofing corpus.

The package pairs a tiny MLP detector with two output heads: a weighted
cross-entropy softmax baseline and a Dirichlet evidence head whose
uncertainty mass flags unreliable predictions.  Everything downstream of
numpy is implemented here: special functions, FFT front-end, corpus
synthesis, metrics, and training.
"""

from .errors import ConfigError, FadelError, InputError, NumericError, VersionError
from .estimator import FadelClassifier, LogMelFeatures

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FadelError",
    "FadelClassifier",
    "InputError",
    "LogMelFeatures",
    "NumericError",
    "VersionError",
    "__version__",
]
