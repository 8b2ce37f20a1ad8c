"""Evaluation harness: probe/fused accuracy, ablation grid, missing-rate sweeps,
and the modality-gap diagnostic (distance between unit-normalized embedding
centroids; a stated substitute metric, not a reproduced figure).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import altopt
from . import model as mdl
from .baselines import (
    ConcatModel,
    LateFusionModel,
    concat_logits,
    late_branch_logits,
    train_concat,
    train_late_fusion,
    unimodal_probe,
)
from .data import MultimodalDataset, SplitSpec, apply_missing_mask, split
from .errors import ContractViolation
from .fusion import predict
from .numkernel import mix_seed

# sub-streams of a sweep run's seed
_STREAM_MASK = 20  # + split index (train/val/test)


@dataclass
class EvalReport:
    """Per-modality probe accuracies plus the fused ("multi") result.

    `confusion` counts fused predictions (rows = true class, cols = predicted)
    over the `sample_count` samples the fused evaluation covered.
    """

    probe_accuracies: list[float | None]
    multi_accuracy: float
    confusion: np.ndarray
    sample_count: int


@dataclass
class SweepReport:
    rows: list[tuple[float, EvalReport]]  # eta ascending; report aggregated over seeds
    seeds: tuple[int, ...]


@dataclass
class GapReport:
    centroids: np.ndarray  # (M, embed_dim), unit rows
    distances: np.ndarray  # (M, M) pairwise Euclidean distances


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if predictions.size == 0 or predictions.size != labels.size:
        raise ContractViolation("accuracy needs equal-length non-empty inputs")
    return float(np.mean(predictions == labels))


def _confusion(predictions, labels, class_count: int) -> np.ndarray:
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return counts


def _fused_predictions_mla(
    params: mdl.ModelParams, ds: MultimodalDataset, dynamic_fusion: bool
) -> np.ndarray:
    preds = np.empty(ds.sample_count, dtype=np.int64)
    for i in range(ds.sample_count):
        features = [t[i] for t in ds.tables]
        preds[i] = predict(
            params, features, ds.presence[i], dynamic_fusion=dynamic_fusion
        ).predicted_class
    return preds


def _fused_predictions_late(model: LateFusionModel, ds: MultimodalDataset) -> np.ndarray:
    usable = ds.presence & np.asarray(model.trained, dtype=bool)
    if not usable.any(axis=1).all():
        raise ContractViolation("some sample has no trained present modality")
    total = np.zeros((ds.sample_count, ds.class_count))
    for m in range(ds.modality_count):
        if not model.trained[m]:
            continue
        idx = np.flatnonzero(usable[:, m])
        if idx.size:
            total[idx] += late_branch_logits(model, m, ds.tables[m][idx])
    mean = total / usable.sum(axis=1, keepdims=True)
    return np.argmax(mean, axis=1)


def evaluate(model, ds: MultimodalDataset, dynamic_fusion: bool = True) -> EvalReport:
    """Unimodal probes for every modality plus the fused prediction.

    The concat model fuses only fully-present samples; the other models fuse
    every sample over its present modalities. `dynamic_fusion` switches the
    alternating model between entropy weights and uniform weights and is
    ignored by the baselines.
    """
    probes = [unimodal_probe(model, m, ds) for m in range(ds.modality_count)]
    if isinstance(model, mdl.ModelParams):
        labels = ds.labels
        preds = _fused_predictions_mla(model, ds, dynamic_fusion)
    elif isinstance(model, ConcatModel):
        paired = np.flatnonzero(ds.presence.all(axis=1))
        if paired.size == 0:
            raise ContractViolation("concat evaluation needs fully-present samples")
        labels = ds.labels[paired]
        preds = np.argmax(
            concat_logits(model, [t[paired] for t in ds.tables]), axis=1
        )
    elif isinstance(model, LateFusionModel):
        labels = ds.labels
        preds = _fused_predictions_late(model, ds)
    else:
        raise ContractViolation(f"cannot evaluate model of type {type(model).__name__}")
    return EvalReport(
        probe_accuracies=probes,
        multi_accuracy=accuracy(preds, labels),
        confusion=_confusion(preds, labels, ds.class_count),
        sample_count=int(labels.size),
    )


def ablate(
    config: altopt.TrainConfig,
    train_ds: MultimodalDataset,
    test_ds: MultimodalDataset,
) -> dict[tuple[bool, bool], EvalReport]:
    """2x2 grid over {head-gradient modification} x {dynamic fusion}.

    Keys are (hgm, df). DF is inference-only, so two trainings cover the grid;
    DF-off evaluates with uniform 1/M weights.
    """
    reports: dict[tuple[bool, bool], EvalReport] = {}
    for hgm in (True, False):
        params, _ = altopt.train(replace(config, hgm_enabled=hgm), train_ds)
        for df in (True, False):
            reports[(hgm, df)] = evaluate(params, test_ds, dynamic_fusion=df)
    return reports


def train_kind(kind: str, config: altopt.TrainConfig, train_ds: MultimodalDataset):
    if kind == "mla":
        params, _ = altopt.train(config, train_ds)
        return params
    if kind == "concat":
        return train_concat(config, train_ds)
    if kind == "late":
        return train_late_fusion(config, train_ds)
    raise ContractViolation(f"unknown model kind {kind!r}")


def masked_splits(
    base: MultimodalDataset, split_spec: SplitSpec, eta: float, seed: int
) -> tuple[MultimodalDataset, MultimodalDataset, MultimodalDataset]:
    """Split (fixed by split_spec), then mask each split at rate eta with
    split-specific sub-seeds of the run seed. At eta 0 this reduces to the
    plain split, so sweep rows at rate 0 coincide with unmasked runs."""
    parts = split(base, split_spec)
    return tuple(
        apply_missing_mask(part, eta, mix_seed(seed, _STREAM_MASK + i))
        for i, part in enumerate(parts)
    )


def _aggregate(reports: list[EvalReport]) -> EvalReport:
    probes = []
    for m in range(len(reports[0].probe_accuracies)):
        vals = [r.probe_accuracies[m] for r in reports if r.probe_accuracies[m] is not None]
        probes.append(float(np.mean(vals)) if vals else None)
    return EvalReport(
        probe_accuracies=probes,
        multi_accuracy=float(np.mean([r.multi_accuracy for r in reports])),
        confusion=sum(r.confusion for r in reports),
        sample_count=sum(r.sample_count for r in reports),
    )


def missing_sweep(
    config: altopt.TrainConfig,
    base: MultimodalDataset,
    etas,
    seeds,
    split_spec: SplitSpec,
    kind: str = "mla",
) -> SweepReport:
    """Mask / train / evaluate per (eta, seed); one aggregated report per eta."""
    etas = sorted(float(e) for e in etas)
    if any(not 0.0 <= e <= 0.7 for e in etas):
        raise ContractViolation("sweep rates must lie in [0, 0.7]")
    if len(set(etas)) != len(etas):
        raise ContractViolation("sweep rates must be distinct")
    if not seeds:
        raise ContractViolation("sweep needs at least one seed")
    rows = []
    for eta in etas:
        reports = []
        for seed in seeds:
            train_ds, _, test_ds = masked_splits(base, split_spec, eta, seed)
            model = train_kind(kind, replace(config, seed=seed), train_ds)
            reports.append(evaluate(model, test_ds))
        rows.append((eta, _aggregate(reports)))
    return SweepReport(rows=rows, seeds=tuple(seeds))


def modality_gap(params: mdl.ModelParams, ds: MultimodalDataset) -> GapReport:
    """Pairwise distances between unit-normalized per-modality embedding centroids,
    computed over the samples where every modality is present.
    """
    paired = np.flatnonzero(ds.presence.all(axis=1))
    if paired.size == 0:
        raise ContractViolation("modality gap needs fully-present samples")
    centroids = []
    for m in range(ds.modality_count):
        emb = mdl.encode(params, m, ds.tables[m][paired])
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        centroid = np.where(norms > 0, emb / np.maximum(norms, 1e-300), emb).mean(axis=0)
        scale = np.linalg.norm(centroid)
        if scale < 1e-12:
            raise ContractViolation(f"modality {m} centroid is degenerate")
        centroids.append(centroid / scale)
    centroids = np.vstack(centroids)
    diff = centroids[:, None, :] - centroids[None, :, :]
    return GapReport(centroids=centroids, distances=np.linalg.norm(diff, axis=2))
