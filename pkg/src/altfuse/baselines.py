"""Joint-training comparators: concatenation fusion and late fusion.

Both use the same encoder architecture and optimizer settings as the
alternating trainer. To keep per-modality gradient budgets comparable, a
joint model trains for ceil(T / M) epochs (each epoch touches every
modality once), and each late-fusion branch trains for ceil(T / M) epochs
on its own modality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .altopt import TrainConfig
from .data import MultimodalDataset, minibatches, validate_dataset
from .errors import ContractViolation, SchemaError
from .model import _backprop_encoder, _forward_encoder, _glorot
from .numkernel import make_rng, mix_seed, softmax_rows

# sub-streams of TrainConfig.seed (disjoint from the alternating trainer's)
_STREAM_CONCAT_INIT = 300
_STREAM_CONCAT_BATCH = 301
_STREAM_LATE_INIT = 400  # + modality
_STREAM_LATE_BATCH = 500  # + modality, mixed with epoch


@dataclass
class ConcatModel:
    """M encoders feeding one fused head over the stacked features."""

    encoders: list[mdl.EncoderParams]
    head: mdl.HeadParams  # (M * embed_dim, class_count)
    dims: mdl.ModelDims


@dataclass
class LateFusionModel:
    """Independent (encoder, head) pair per modality; inference averages logits."""

    encoders: list[mdl.EncoderParams]
    heads: list[mdl.HeadParams]
    dims: mdl.ModelDims
    trained: list[bool]


def _joint_epochs(config: TrainConfig, modality_count: int) -> int:
    return -(-config.total_steps // modality_count)


def _init_encoders(dims: mdl.ModelDims, rng: np.random.Generator) -> list[mdl.EncoderParams]:
    encoders = []
    for m in range(dims.modality_count):
        weights, biases = [], []
        for fan_in, fan_out in dims.encoder_layer_dims(m):
            weights.append(_glorot(rng, fan_in, fan_out))
            biases.append(np.zeros(fan_out))
        encoders.append(mdl.EncoderParams(weights, biases))
    return encoders


def concat_logits(model: ConcatModel, rows: list[np.ndarray]) -> np.ndarray:
    """Fused logits for batches with every modality present."""
    feats = [
        _forward_encoder(enc, np.atleast_2d(np.asarray(x, dtype=np.float64)))[-1]
        for enc, x in zip(model.encoders, rows)
    ]
    return np.hstack(feats) @ model.head.weight + model.head.bias


def train_concat(config: TrainConfig, dataset: MultimodalDataset) -> ConcatModel:
    """Joint SGD over the fully-present (paired) samples."""
    validate_dataset(dataset)
    paired = np.flatnonzero(dataset.presence.all(axis=1))
    if paired.size == 0:
        raise ContractViolation("concat training needs at least one fully-present sample")

    dims = mdl.ModelDims(
        dataset.modality_dims, config.hidden, config.embed_dim, dataset.class_count
    )
    rng = make_rng(mix_seed(config.seed, _STREAM_CONCAT_INIT))
    encoders = _init_encoders(dims, rng)
    s, mcount = config.embed_dim, dims.modality_count
    head = mdl.HeadParams(
        _glorot(rng, mcount * s, dims.class_count), np.zeros(dims.class_count)
    )

    enc_arrays = [mdl.encoder_arrays(e) for e in encoders]
    enc_vel = [mdl.zeros_like_arrays(a) for a in enc_arrays]
    head_arrays = mdl.head_arrays(head)
    head_vel = mdl.zeros_like_arrays(head_arrays)

    lr = config.lr
    decay_at = set(config.decay_steps)
    for epoch in range(_joint_epochs(config, mcount)):
        if epoch in decay_at:
            lr *= config.lr_decay
        shuffle = make_rng(mix_seed(mix_seed(config.seed, _STREAM_CONCAT_BATCH), epoch))
        order = paired[shuffle.permutation(paired.size)]
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            b = idx.size
            acts = [
                _forward_encoder(enc, dataset.tables[m][idx])
                for m, enc in enumerate(encoders)
            ]
            stacked = np.hstack([a[-1] for a in acts])
            logits = stacked @ head.weight + head.bias
            dlogits = softmax_rows(logits)
            dlogits[np.arange(b), dataset.labels[idx]] -= 1.0
            dlogits /= b
            d_head = mdl.HeadParams(stacked.T @ dlogits, dlogits.sum(axis=0))
            d_stacked = dlogits @ head.weight.T
            mdl.sgd_update(head_arrays, mdl.head_arrays(d_head), head_vel, lr, config.momentum)
            for m, enc in enumerate(encoders):
                grad = _backprop_encoder(enc, acts[m], d_stacked[:, m * s : (m + 1) * s])
                mdl.sgd_update(
                    enc_arrays[m], mdl.encoder_arrays(grad), enc_vel[m], lr, config.momentum
                )
    return ConcatModel(encoders, head, dims)


def train_late_fusion(config: TrainConfig, dataset: MultimodalDataset) -> LateFusionModel:
    """Each (encoder, head) pair trains independently on its own modality."""
    validate_dataset(dataset)
    dims = mdl.ModelDims(
        dataset.modality_dims, config.hidden, config.embed_dim, dataset.class_count
    )
    encoders, heads, trained = [], [], []
    epochs = _joint_epochs(config, dims.modality_count)
    for m in range(dims.modality_count):
        branch_dims = mdl.ModelDims(
            (dims.modality_dims[m],), config.hidden, config.embed_dim, dataset.class_count
        )
        branch = mdl.init_params(branch_dims, mix_seed(config.seed, _STREAM_LATE_INIT + m))
        enc_arrays = mdl.encoder_arrays(branch.encoders[0])
        enc_vel = mdl.zeros_like_arrays(enc_arrays)
        head_arrays = mdl.head_arrays(branch.head)
        head_vel = mdl.zeros_like_arrays(head_arrays)
        saw_data = False
        lr = config.lr
        decay_at = set(config.decay_steps)
        for epoch in range(epochs):
            if epoch in decay_at:
                lr *= config.lr_decay
            batches = minibatches(
                dataset,
                m,
                config.batch_size,
                mix_seed(mix_seed(config.seed, _STREAM_LATE_BATCH + m), epoch),
            )
            for idx in batches:
                saw_data = True
                bundle = mdl.loss_and_grads(
                    branch, 0, dataset.tables[m][idx], dataset.labels[idx]
                )
                mdl.sgd_update(
                    enc_arrays, mdl.encoder_arrays(bundle.encoder), enc_vel, lr, config.momentum
                )
                mdl.sgd_update(
                    head_arrays, mdl.head_arrays(bundle.head), head_vel, lr, config.momentum
                )
        encoders.append(branch.encoders[0])
        heads.append(branch.head)
        trained.append(saw_data)
    return LateFusionModel(encoders, heads, dims, trained)


def late_branch_logits(model: LateFusionModel, m: int, rows: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    feats = _forward_encoder(model.encoders[m], rows)[-1]
    return feats @ model.heads[m].weight + model.heads[m].bias


def unimodal_probe(model, m: int, ds: MultimodalDataset) -> float | None:
    """Accuracy of modality m's own pathway over the test samples where it is present.

    For the concat model the other modalities' feature blocks are zeroed
    (equivalently: only block m of the fused head is applied). Returns None
    when the modality is untrained or has no present samples (signalled
    condition, not an error).
    """
    idx = ds.present_indices(m)
    if idx.size == 0:
        return None
    x, y = ds.tables[m][idx], ds.labels[idx]
    if isinstance(model, mdl.ModelParams):
        logits = mdl.head_logits(model.head, mdl.encode(model, m, x))
    elif isinstance(model, ConcatModel):
        s = model.dims.embed_dim
        feats = _forward_encoder(model.encoders[m], x)[-1]
        logits = feats @ model.head.weight[m * s : (m + 1) * s] + model.head.bias
    elif isinstance(model, LateFusionModel):
        if not model.trained[m]:
            return None
        logits = late_branch_logits(model, m, x)
    else:
        raise ContractViolation(f"cannot probe model of type {type(model).__name__}")
    return float(np.mean(np.argmax(logits, axis=1) == y))


# --------------------------------------------------------------------------
# checkpoints (shared format, kind field distinguishes the model family)
# --------------------------------------------------------------------------


def save_concat_checkpoint(model: ConcatModel, path, step: int = 0) -> None:
    named = []
    for m, enc in enumerate(model.encoders):
        for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
            named.append((f"encoder{m}.layer{i}.weight", w))
            named.append((f"encoder{m}.layer{i}.bias", b))
    named.append(("head.weight", model.head.weight))
    named.append(("head.bias", model.head.bias))
    mdl.write_checkpoint(path, "concat", step, model.dims, named)


def save_late_checkpoint(model: LateFusionModel, path, step: int = 0) -> None:
    named = []
    for m, (enc, head) in enumerate(zip(model.encoders, model.heads)):
        for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
            named.append((f"encoder{m}.layer{i}.weight", w))
            named.append((f"encoder{m}.layer{i}.bias", b))
        named.append((f"head{m}.weight", head.weight))
        named.append((f"head{m}.bias", head.bias))
    mdl.write_checkpoint(path, "late", step, model.dims, named)


def load_model(path):
    """Load any checkpoint kind; returns (model, manifest)."""
    manifest, arrays = mdl.read_checkpoint(path)
    kind = manifest.get("kind")
    if kind == "mla":
        params, _ = mdl.load_checkpoint(path)
        return params, manifest
    dims = mdl._dims_from_manifest(manifest)
    try:
        encoders = []
        for m in range(dims.modality_count):
            n_layers = len(dims.encoder_layer_dims(m))
            encoders.append(
                mdl.EncoderParams(
                    [arrays[f"encoder{m}.layer{i}.weight"] for i in range(n_layers)],
                    [arrays[f"encoder{m}.layer{i}.bias"] for i in range(n_layers)],
                )
            )
        if kind == "concat":
            head = mdl.HeadParams(arrays["head.weight"], arrays["head.bias"])
            if head.weight.shape != (dims.modality_count * dims.embed_dim, dims.class_count):
                raise SchemaError(f"concat head has shape {head.weight.shape}")
            return ConcatModel(encoders, head, dims), manifest
        if kind == "late":
            heads = [
                mdl.HeadParams(arrays[f"head{m}.weight"], arrays[f"head{m}.bias"])
                for m in range(dims.modality_count)
            ]
            return LateFusionModel(encoders, heads, dims, [True] * dims.modality_count), manifest
    except KeyError as e:
        raise SchemaError(f"checkpoint missing array {e}") from e
    raise SchemaError(f"unknown checkpoint kind {kind!r}")
