"""Modality-specific MLP encoders sharing one linear classification head.

Forward pass, softmax cross-entropy with exact analytic gradients, SGD with
momentum, and bit-exact checkpoint serialization (version ``mla-ckpt/1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, FormatError, SchemaError
from .numkernel import make_rng, softmax_rows

CHECKPOINT_VERSION = "mla-ckpt/1"


@dataclass
class EncoderParams:
    """Affine layers with rectifier activations on all but the last layer."""

    weights: list[np.ndarray]  # layer i: (in_i, out_i)
    biases: list[np.ndarray]


@dataclass
class HeadParams:
    weight: np.ndarray  # (embed_dim, class_count)
    bias: np.ndarray  # (class_count,)


@dataclass(frozen=True)
class ModelDims:
    modality_dims: tuple[int, ...]
    hidden: tuple[int, ...] = (32, 32)
    embed_dim: int = 32
    class_count: int = 2

    @property
    def modality_count(self) -> int:
        return len(self.modality_dims)

    def encoder_layer_dims(self, m: int) -> list[tuple[int, int]]:
        sizes = (self.modality_dims[m], *self.hidden, self.embed_dim)
        return list(zip(sizes[:-1], sizes[1:]))


@dataclass
class ModelParams:
    encoders: list[EncoderParams]
    head: HeadParams
    dims: ModelDims


@dataclass
class GradBundle:
    """Exact gradients for one (modality, batch) pair plus the batch mean feature."""

    encoder: EncoderParams
    head: HeadParams
    mean_feature: np.ndarray
    loss: float


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Fan-based uniform weights, zero biases; draw order is encoders then head."""
    rng = make_rng(seed)
    encoders = []
    for m in range(dims.modality_count):
        weights, biases = [], []
        for fan_in, fan_out in dims.encoder_layer_dims(m):
            weights.append(_glorot(rng, fan_in, fan_out))
            biases.append(np.zeros(fan_out))
        encoders.append(EncoderParams(weights, biases))
    head = HeadParams(
        _glorot(rng, dims.embed_dim, dims.class_count), np.zeros(dims.class_count)
    )
    return ModelParams(encoders, head, dims)


def _forward_encoder(enc: EncoderParams, x: np.ndarray) -> list[np.ndarray]:
    """Return per-layer outputs; rectifier on all but the last layer."""
    acts = [x]
    last = len(enc.weights) - 1
    for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
        h = acts[-1] @ w + b
        acts.append(h if i == last else np.maximum(h, 0.0))
    return acts


def _backprop_encoder(enc: EncoderParams, acts: list[np.ndarray], delta: np.ndarray) -> EncoderParams:
    """Gradients for one encoder given d(loss)/d(features) in `delta`."""
    n = len(enc.weights)
    d_weights: list[np.ndarray] = [None] * n
    d_biases: list[np.ndarray] = [None] * n
    for i in range(n - 1, -1, -1):
        d_weights[i] = acts[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ enc.weights[i].T) * (acts[i] > 0.0)
    return EncoderParams(d_weights, d_biases)


def encode(params: ModelParams, m: int, x_batch: np.ndarray) -> np.ndarray:
    """Feature batch (B x embed_dim) for modality m."""
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if x_batch.shape[1] != params.dims.modality_dims[m]:
        raise ContractViolation(
            f"modality {m} expects dim {params.dims.modality_dims[m]}, got {x_batch.shape[1]}"
        )
    return _forward_encoder(params.encoders[m], x_batch)[-1]


def head_logits(head: HeadParams, features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != head.weight.shape[0]:
        raise ContractViolation(
            f"head expects {head.weight.shape[0]} features, got {features.shape[1]}"
        )
    return features @ head.weight + head.bias


def loss_and_grads(
    params: ModelParams, m: int, x_batch: np.ndarray, y_batch: np.ndarray
) -> GradBundle:
    """Mean softmax cross-entropy over the batch with exact backprop gradients.

    Only encoder m and the head receive gradients; every other encoder is
    untouched by construction.
    """
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    y_batch = np.asarray(y_batch, dtype=np.int64).ravel()
    b = x_batch.shape[0]
    if b == 0:
        raise ContractViolation("empty batch")
    if y_batch.shape[0] != b:
        raise ContractViolation("batch features and labels disagree on length")

    enc = params.encoders[m]
    acts = _forward_encoder(enc, x_batch)
    features = acts[-1]
    logits = head_logits(params.head, features)

    # loss via logsumexp for stability; gradient via probabilities
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    loss = float(np.mean(logz - logits[np.arange(b), y_batch]))

    dlogits = softmax_rows(logits)
    dlogits[np.arange(b), y_batch] -= 1.0
    dlogits /= b

    d_head_w = features.T @ dlogits
    d_head_b = dlogits.sum(axis=0)
    delta = dlogits @ params.head.weight.T

    return GradBundle(
        encoder=_backprop_encoder(enc, acts, delta),
        head=HeadParams(d_head_w, d_head_b),
        mean_feature=features.mean(axis=0),
        loss=loss,
    )


def encoder_arrays(enc: EncoderParams) -> list[np.ndarray]:
    out = []
    for w, b in zip(enc.weights, enc.biases):
        out.extend((w, b))
    return out


def head_arrays(head: HeadParams) -> list[np.ndarray]:
    return [head.weight, head.bias]


def zeros_like_arrays(arrays: list[np.ndarray]) -> list[np.ndarray]:
    return [np.zeros_like(a) for a in arrays]


def sgd_update(
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
    velocities: list[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """In-place momentum step: v <- momentum*v + g; theta <- theta - lr*v."""
    if not (len(arrays) == len(grads) == len(velocities)):
        raise ContractViolation("sgd_update argument lists differ in length")
    for a, g, v in zip(arrays, grads, velocities):
        if a.shape != g.shape or a.shape != v.shape:
            raise ContractViolation(f"sgd_update shape mismatch: {a.shape} vs {g.shape}")
        v *= momentum
        v += g
        a -= lr * v


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def named_model_arrays(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    out = []
    for m, enc in enumerate(params.encoders):
        for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
            out.append((f"encoder{m}.layer{i}.weight", w))
            out.append((f"encoder{m}.layer{i}.bias", b))
    out.append(("head.weight", params.head.weight))
    out.append(("head.bias", params.head.bias))
    return out


def write_checkpoint(
    path: str | Path,
    kind: str,
    step: int,
    dims: ModelDims,
    named_arrays: list[tuple[str, np.ndarray]],
) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "step": step,
        "dims": {
            "modality_dims": list(dims.modality_dims),
            "hidden": list(dims.hidden),
            "embed_dim": dims.embed_dim,
            "class_count": dims.class_count,
        },
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in named_arrays],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in named_arrays)
    (root / "params.bin").write_bytes(blob)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a checkpoint directory into (manifest, name -> array)."""
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest.json: parse error at byte {e.pos}: {e.msg}") from e
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise SchemaError(f"unsupported checkpoint version {manifest.get('version')!r}")
    raw = (root / "params.bin").read_bytes()
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest.get("arrays", []):
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = 8 * int(np.prod(shape)) if shape else 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(
                f"params.bin: array {entry['name']!r} needs {nbytes} bytes at offset "
                f"{offset}, file ends at byte {len(raw)}"
            )
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"params.bin: {len(raw) - offset} trailing bytes at offset {offset}")
    return manifest, arrays


def _dims_from_manifest(manifest: dict) -> ModelDims:
    d = manifest["dims"]
    return ModelDims(
        modality_dims=tuple(int(x) for x in d["modality_dims"]),
        hidden=tuple(int(x) for x in d["hidden"]),
        embed_dim=int(d["embed_dim"]),
        class_count=int(d["class_count"]),
    )


def save_checkpoint(params: ModelParams, path: str | Path, step: int = 0) -> None:
    write_checkpoint(path, "mla", step, params.dims, named_model_arrays(params))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, int]:
    manifest, arrays = read_checkpoint(path)
    if manifest.get("kind") != "mla":
        raise SchemaError(f"expected kind 'mla', got {manifest.get('kind')!r}")
    dims = _dims_from_manifest(manifest)
    try:
        encoders = []
        for m in range(dims.modality_count):
            n_layers = len(dims.encoder_layer_dims(m))
            weights = [arrays[f"encoder{m}.layer{i}.weight"] for i in range(n_layers)]
            biases = [arrays[f"encoder{m}.layer{i}.bias"] for i in range(n_layers)]
            encoders.append(EncoderParams(weights, biases))
        head = HeadParams(arrays["head.weight"], arrays["head.bias"])
    except KeyError as e:
        raise SchemaError(f"checkpoint missing array {e}") from e
    for m, enc in enumerate(encoders):
        for i, (fan_in, fan_out) in enumerate(dims.encoder_layer_dims(m)):
            if enc.weights[i].shape != (fan_in, fan_out) or enc.biases[i].shape != (fan_out,):
                raise SchemaError(f"encoder {m} layer {i} shape disagrees with dims")
    if head.weight.shape != (dims.embed_dim, dims.class_count) or head.bias.shape != (
        dims.class_count,
    ):
        raise SchemaError(f"head shape {head.weight.shape} disagrees with dims")
    return ModelParams(encoders, head, dims), int(manifest.get("step", 0))
