"""Classification heads: weighted-softmax baseline and Dirichlet evidence.

Class index convention used throughout the package: column 0 is the spoof
class, column 1 is bonafide, and the detection score of a trial is the
predicted bonafide probability.

The evidential head maps logits z to non-negative evidence e through one
of three activations, sets Dirichlet concentrations alpha = e + 1, and
trains by minimizing the expectation of the weighted cross-entropy under
that Dirichlet, which has the closed form

    L = sum_j w_j y_j (psi(S) - psi(alpha_j)),   S = sum_k alpha_k,

with psi the digamma function.  Gradients are analytic (trigamma terms),
no sampling involved.  Predictive probabilities are alpha / S and the
scalar uncertainty mass is K / S.

All loss and prediction functions accept a single vector of shape (K,) or
a batch of shape (..., K); reductions run over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .special import digamma, log_gamma, trigamma

SPOOF, BONAFIDE = 0, 1

ACTIVATIONS = ("relu", "softplus", "exponential")
HEADS = ("softmax", "evidential")

# Evidence is capped so exp() cannot overflow; the cap is far above any
# value a trained model reaches.
EVIDENCE_CAP = 1e10
_LOG_CAP = float(np.log(EVIDENCE_CAP))


def _check_finite(name: str, arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def _check_activation(activation: str) -> str:
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown evidence activation {activation!r}; choose from {ACTIVATIONS}")
    return activation


def _check_target(target, k: int) -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 0 or t.shape[-1] != k:
        raise ValueError(f"target must have {k} classes on the last axis")
    onehot = np.all((t == 0.0) | (t == 1.0)) and np.all(t.sum(axis=-1) == 1.0)
    if not onehot:
        raise ValueError("target rows must be one-hot")
    return t


def _check_weights(weights, k: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (k,):
        raise ValueError(f"class weights must have shape ({k},)")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("class weights must be finite and positive")
    return w


def _check_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim == 0 or a.shape[-1] < 2:
        raise ValueError("alpha must have at least 2 classes on the last axis")
    if a.size and (not np.all(np.isfinite(a)) or np.any(a <= 0.0)):
        raise ValueError("alpha entries must be finite and positive")
    return a


def _rows(arr: np.ndarray) -> np.ndarray:
    """View (..., K) as (n, K) so per-sample math never hits 0-d scalars."""
    return arr.reshape(-1, arr.shape[-1])


def _unrows(flat: np.ndarray, lead: tuple[int, ...]):
    out = flat.reshape(lead + flat.shape[1:]) if flat.ndim > 1 else flat.reshape(lead)
    if out.ndim == 0:
        return float(out)
    return out


def softmax(logits) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    z = _check_finite("logits", logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = _check_finite("logits", logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def wce_loss(logits, target, weights) -> tuple:
    """Weighted cross-entropy of a softmax head.

    Returns per-sample losses with shape logits.shape[:-1] and the exact
    gradient with respect to the logits, w_t * (softmax(z) - y).
    """
    z = _check_finite("logits", logits)
    t = _check_target(target, z.shape[-1])
    w = _check_weights(weights, z.shape[-1])
    lead = z.shape[:-1]
    z2, t2 = _rows(z), _rows(np.broadcast_to(t, z.shape))
    logp = log_softmax(z2)
    loss = -(w * t2 * logp).sum(axis=-1)
    wt = (w * t2).sum(axis=-1)
    grad = wt[:, None] * (softmax(z2) - t2)
    return _unrows(loss, lead), grad.reshape(z.shape)


def evidence(logits, activation: str) -> np.ndarray:
    """Map logits to non-negative evidence."""
    z = _check_finite("logits", logits)
    _check_activation(activation)
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softplus":
        # Branch on sign so exp never overflows.
        return np.where(z > 0.0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0.0))))
    return np.exp(np.minimum(z, _LOG_CAP))


def evidence_grad(logits, activation: str) -> np.ndarray:
    """Elementwise derivative of :func:`evidence` with respect to logits."""
    z = _check_finite("logits", logits)
    _check_activation(activation)
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    if activation == "softplus":
        return np.where(z >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(np.minimum(z, 0.0)) / (1.0 + np.exp(np.minimum(z, 0.0))))
    return np.where(z < _LOG_CAP, np.exp(np.minimum(z, _LOG_CAP)), 0.0)


def evidence_to_alpha(logits, activation: str) -> np.ndarray:
    """Dirichlet concentrations alpha = evidence + 1 (every entry >= 1)."""
    return evidence(logits, activation) + 1.0


def uncertainty(alpha):
    """Scalar uncertainty mass K / sum(alpha) of a Dirichlet opinion."""
    a = _check_alpha(alpha)
    out = a.shape[-1] / _rows(a).sum(axis=-1)
    return _unrows(out, a.shape[:-1])


def dirichlet_mean(alpha) -> np.ndarray:
    """Expected probability vector alpha / sum(alpha)."""
    a = _check_alpha(alpha)
    return a / a.sum(axis=-1, keepdims=True)


def edl_loss(alpha, target, weights, kl_weight: float = 0.0):
    """Per-sample evidential loss E_Dir(alpha)[weighted cross-entropy].

    Closed form sum_j w_j y_j (psi(S) - psi(alpha_j)).  With
    ``kl_weight > 0`` an annealable KL(Dir(alpha~) || Dir(1)) penalty is
    added, where alpha~ removes the evidence of the target class.
    """
    a = _check_alpha(alpha)
    t = _check_target(target, a.shape[-1])
    w = _check_weights(weights, a.shape[-1])
    lead = a.shape[:-1]
    a2, t2 = _rows(a), _rows(np.broadcast_to(t, a.shape))
    s = a2.sum(axis=-1)
    loss = (w * t2 * (digamma(s)[:, None] - digamma(a2))).sum(axis=-1)
    if kl_weight:
        tilde = t2 + (1.0 - t2) * a2
        loss = loss + kl_weight * np.asarray(dirichlet_kl_uniform(tilde))
    return _unrows(loss, lead)


def edl_alpha_grad(alpha, target, weights, kl_weight: float = 0.0) -> np.ndarray:
    """Analytic gradient of :func:`edl_loss` with respect to alpha."""
    a = _check_alpha(alpha)
    t = _check_target(target, a.shape[-1])
    w = _check_weights(weights, a.shape[-1])
    a2, t2 = _rows(a), _rows(np.broadcast_to(t, a.shape))
    s = a2.sum(axis=-1)
    wt = (w * t2).sum(axis=-1)
    grad = wt[:, None] * trigamma(s)[:, None] - w * t2 * trigamma(a2)
    if kl_weight:
        k = a.shape[-1]
        tilde = t2 + (1.0 - t2) * a2
        st = tilde.sum(axis=-1)
        dkl = (tilde - 1.0) * trigamma(tilde) - (st - k)[:, None] * trigamma(st)[:, None]
        grad = grad + kl_weight * dkl * (1.0 - t2)
    return grad.reshape(a.shape)


def edl_loss_grad(logits, activation: str, target, weights, kl_weight: float = 0.0) -> np.ndarray:
    """Gradient of the evidential loss with respect to the logits.

    Chains :func:`edl_alpha_grad` through d(alpha)/d(logits) for the
    chosen evidence activation.
    """
    alpha = evidence_to_alpha(logits, activation)
    return edl_alpha_grad(alpha, target, weights, kl_weight) * evidence_grad(logits, activation)


def dirichlet_kl_uniform(alpha):
    """KL divergence KL(Dir(alpha) || Dir(1, ..., 1))."""
    a = _check_alpha(alpha)
    k = a.shape[-1]
    lead = a.shape[:-1]
    a2 = _rows(a)
    s = a2.sum(axis=-1)
    kl = (
        log_gamma(s)
        - float(log_gamma(float(k)))
        - log_gamma(a2).sum(axis=-1)
        + ((a2 - 1.0) * (digamma(a2) - digamma(s)[:, None])).sum(axis=-1)
    )
    return _unrows(kl, lead)


@dataclass(frozen=True)
class Prediction:
    """Head output for a batch: probabilities and optional uncertainty.

    ``probs`` mirrors the logits' shape; ``uncertainty`` is None for the
    softmax head and has the batch shape for the evidential head.
    ``bonafide_score`` is the detection score column.
    """

    probs: np.ndarray
    uncertainty: np.ndarray | float | None

    @property
    def bonafide_score(self):
        return self.probs[..., BONAFIDE]


def predict(logits, head: str, activation: str | None = None) -> Prediction:
    """Turn logits into head outputs.

    ``head`` is "softmax" or "evidential"; the evidential head requires
    an evidence ``activation``.
    """
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}; choose from {HEADS}")
    if head == "softmax":
        return Prediction(probs=softmax(logits), uncertainty=None)
    if activation is None:
        raise ValueError("the evidential head requires an evidence activation")
    alpha = evidence_to_alpha(logits, activation)
    return Prediction(probs=dirichlet_mean(alpha), uncertainty=uncertainty(alpha))
