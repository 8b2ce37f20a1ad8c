"""Uncertainty-weighted fusion of per-modality predictions.

Each present modality contributes its logits; modalities with lower
prediction entropy get exponentially larger weights (softmax of negative
entropy). Fused logits are the weighted sum, argmaxed without re-softmaxing.
Absent modalities contribute nothing; with one present modality the result
reduces to that unimodal prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .model import ModelParams, encode, head_logits
from .numkernel import softmax


@dataclass(frozen=True)
class ModalityPrediction:
    modality: int
    logits: np.ndarray
    probs: np.ndarray
    entropy: float


@dataclass(frozen=True)
class FusionResult:
    predictions: tuple[ModalityPrediction, ...]
    weights: np.ndarray  # one per present modality, positive, sums to 1
    fused_logits: np.ndarray
    predicted_class: int


def entropy(p) -> float:
    """Natural-log entropy with the 0*log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0 or p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
        raise ContractViolation("entropy needs a probability vector")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def fusion_weights(entropies) -> np.ndarray:
    """Importance weights: softmax of negative entropy over present modalities."""
    e = np.asarray(entropies, dtype=np.float64).ravel()
    if e.size == 0:
        raise ContractViolation("fusion_weights needs at least one modality")
    if not np.all(np.isfinite(e)) or e.min() < 0:
        raise ContractViolation("entropies must be finite and non-negative")
    return softmax(-e)


def fuse(predictions: tuple[ModalityPrediction, ...], weights) -> FusionResult:
    """Weighted logit combination; argmax ties break toward the lowest class."""
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if len(predictions) != weights.size:
        raise ContractViolation("one weight per prediction required")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ContractViolation("weights must sum to 1")
    fused = np.zeros_like(predictions[0].logits)
    for pred, lam in zip(predictions, weights):
        if pred.logits.shape != fused.shape:
            raise ContractViolation("predictions disagree on class count")
        fused = fused + lam * pred.logits
    return FusionResult(tuple(predictions), weights, fused, int(np.argmax(fused)))


def predict(
    params: ModelParams,
    features,
    present,
    dynamic_fusion: bool = True,
) -> FusionResult:
    """Fused prediction for one sample.

    `features[m]` is the modality-m feature vector (ignored when absent),
    `present[m]` its presence flag. With dynamic_fusion off, present
    modalities are weighted uniformly instead of by entropy.
    """
    present = np.asarray(present, dtype=bool).ravel()
    if not present.any():
        raise ContractViolation("cannot predict with every modality absent")
    preds = []
    for m in np.flatnonzero(present):
        logits = head_logits(params.head, encode(params, int(m), features[m]))[0]
        probs = softmax(logits)
        preds.append(ModalityPrediction(int(m), logits, probs, entropy(probs)))
    if dynamic_fusion:
        weights = fusion_weights([p.entropy for p in preds])
    else:
        weights = np.full(len(preds), 1.0 / len(preds))
    return fuse(tuple(preds), weights)
