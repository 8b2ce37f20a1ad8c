"""Synthetic multimodal datasets: generation, masking, splits, batching, disk I/O.

Dataset directory format (version ``mla-dataset/1``):

* ``manifest.json``   — version, M, N, C, modality_dims, presence encoding
* ``modality_<m>.bin`` — little-endian float64, row-major, exactly N*d_m values
* ``labels.bin``      — little-endian uint32, N values
* ``presence.bin``    — N*M bytes, 0/1, row-major

Round trips are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, FormatError, SchemaError
from .numkernel import make_rng

DATASET_VERSION = "mla-dataset/1"

# sub-streams of SyntheticSpec.seed (fixed draw order: structure, latents, noise)
_STREAM_STRUCT = 0
_STREAM_LATENT = 1
_STREAM_NOISE = 2


@dataclass(frozen=True)
class ModalityGen:
    """Generator knobs for one modality: output dim, mixing scale, noise level."""

    dim: int
    scale: float = 1.0
    noise_std: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    latent_dim: int
    class_count: int
    samples: int
    modalities: tuple[ModalityGen, ...]
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ContractViolation("latent_dim must be >= 1")
        if self.class_count < 2:
            raise ContractViolation("class_count must be >= 2")
        if self.samples < 1:
            raise ContractViolation("samples must be >= 1")
        if not self.modalities:
            raise ContractViolation("at least one modality required")
        for mg in self.modalities:
            if mg.dim < 1:
                raise ContractViolation("modality dim must be >= 1")
            if mg.noise_std < 0:
                raise ContractViolation("noise_std must be >= 0")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise ContractViolation("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ContractViolation("split fractions must sum to 1")


@dataclass(frozen=True)
class MultimodalDataset:
    """Per-modality feature tables, labels, and a per-sample presence mask.

    Arrays are treated as immutable after construction.
    """

    tables: tuple[np.ndarray, ...]
    labels: np.ndarray
    presence: np.ndarray
    class_count: int

    @property
    def sample_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def modality_count(self) -> int:
        return len(self.tables)

    @property
    def modality_dims(self) -> tuple[int, ...]:
        return tuple(int(t.shape[1]) for t in self.tables)

    def present_indices(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.presence[:, m])


def validate_dataset(ds: MultimodalDataset) -> None:
    """Check every MultimodalDataset invariant; raise SchemaError on violation."""
    n = ds.sample_count
    if ds.modality_count < 1:
        raise SchemaError("dataset has no modalities")
    for m, t in enumerate(ds.tables):
        if t.ndim != 2 or t.dtype != np.float64:
            raise SchemaError(f"modality {m} table must be a 2-D float64 array")
        if t.shape[0] != n:
            raise SchemaError(f"modality {m} has {t.shape[0]} rows, labels have {n}")
        if not np.all(np.isfinite(t)):
            raise SchemaError(f"modality {m} contains non-finite features")
    if ds.labels.ndim != 1:
        raise SchemaError("labels must be 1-D")
    if ds.class_count < 1:
        raise SchemaError("class_count must be >= 1")
    if n and (ds.labels.min() < 0 or ds.labels.max() >= ds.class_count):
        raise SchemaError("labels out of range [0, class_count)")
    if ds.presence.shape != (n, ds.modality_count) or ds.presence.dtype != np.bool_:
        raise SchemaError("presence must be an N x M boolean mask")
    if n and not ds.presence.any(axis=1).all():
        raise SchemaError("every sample must keep at least one modality")


def generate_synthetic(spec: SyntheticSpec) -> MultimodalDataset:
    """Latent-factor generator.

    z ~ N(0, I_k) per sample; label = argmax(V z) where V has orthonormal rows
    (unit-norm rows when class_count > latent_dim), keeping class priors
    near-uniform. Modality m observes A_m z + noise_std * eps; A_m entries are
    scaled by scale/sqrt(k) so per-coordinate signal std equals `scale`,
    making noise_std a direct SNR dial per modality.
    """
    k, n = spec.latent_dim, spec.samples
    struct = make_rng(spec.seed, _STREAM_STRUCT)
    if spec.class_count <= k:
        # orthonormal label directions make the class scores iid, so priors
        # are exactly uniform regardless of seed
        q, _ = np.linalg.qr(struct.standard_normal((k, spec.class_count)))
        label_dirs = q.T
    else:
        label_dirs = struct.standard_normal((spec.class_count, k))
        label_dirs /= np.linalg.norm(label_dirs, axis=1, keepdims=True)
    mixers = [
        struct.standard_normal((mg.dim, k)) * (mg.scale / np.sqrt(k))
        for mg in spec.modalities
    ]

    z = make_rng(spec.seed, _STREAM_LATENT).standard_normal((n, k))
    labels = np.argmax(z @ label_dirs.T, axis=1).astype(np.int64)

    noise_rng = make_rng(spec.seed, _STREAM_NOISE)
    tables = []
    for mg, a in zip(spec.modalities, mixers):
        x = z @ a.T
        if mg.noise_std > 0:
            x = x + mg.noise_std * noise_rng.standard_normal((n, mg.dim))
        tables.append(np.ascontiguousarray(x))

    presence = np.ones((n, len(spec.modalities)), dtype=bool)
    return MultimodalDataset(tuple(tables), labels, presence, spec.class_count)


def apply_missing_mask(ds: MultimodalDataset, eta: float, seed: int) -> MultimodalDataset:
    """Drop each present (sample, modality) cell independently with probability eta.

    A row that would lose all its modalities is redrawn until at least one
    survives, so the per-cell absent rate conditions to (eta - eta^M)/(1 - eta^M)
    rather than eta.
    """
    if not 0.0 <= eta < 1.0:
        raise ContractViolation(f"eta must lie in [0, 1), got {eta}")
    if eta == 0.0:
        return ds
    rng = make_rng(seed)
    n, m = ds.presence.shape
    presence = ds.presence & (rng.random((n, m)) >= eta)
    dead = np.flatnonzero(~presence.any(axis=1))
    while dead.size:
        redraw = ds.presence[dead] & (rng.random((dead.size, m)) >= eta)
        presence[dead] = redraw
        dead = dead[~redraw.any(axis=1)]
    return MultimodalDataset(ds.tables, ds.labels, presence, ds.class_count)


def _take(ds: MultimodalDataset, idx: np.ndarray) -> MultimodalDataset:
    return MultimodalDataset(
        tuple(np.ascontiguousarray(t[idx]) for t in ds.tables),
        ds.labels[idx].copy(),
        ds.presence[idx].copy(),
        ds.class_count,
    )


def split(
    ds: MultimodalDataset, spec: SplitSpec
) -> tuple[MultimodalDataset, MultimodalDataset, MultimodalDataset]:
    """Seeded permutation followed by a contiguous train/val/test cut."""
    n = ds.sample_count
    if n < 3:
        raise ContractViolation("need at least 3 samples to split")
    n_train = int(spec.train_fraction * n)
    n_val = int(spec.val_fraction * n)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ContractViolation(f"split of N={n} produces an empty part")
    perm = make_rng(spec.seed).permutation(n)
    return (
        _take(ds, perm[:n_train]),
        _take(ds, perm[n_train : n_train + n_val]),
        _take(ds, perm[n_train + n_val :]),
    )


def minibatches(ds: MultimodalDataset, m: int, batch_size: int, seed: int) -> list[np.ndarray]:
    """One epoch of shuffled index batches over the samples where modality m is present.

    The final short batch is kept. Returns [] when the modality has no present
    samples (an empty-modality condition, not an error). Callers vary `seed`
    per epoch.
    """
    if batch_size < 1:
        raise ContractViolation("batch_size must be >= 1")
    if not 0 <= m < ds.modality_count:
        raise ContractViolation(f"modality {m} out of range")
    idx = ds.present_indices(m)
    if idx.size == 0:
        return []
    order = idx[make_rng(seed).permutation(idx.size)]
    return [order[i : i + batch_size] for i in range(0, order.size, batch_size)]


def save_dataset(ds: MultimodalDataset, path: str | Path) -> None:
    validate_dataset(ds)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": DATASET_VERSION,
        "M": ds.modality_count,
        "N": ds.sample_count,
        "C": ds.class_count,
        "modality_dims": list(ds.modality_dims),
        "presence_encoding": "uint8 row-major 0/1",
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for m, t in enumerate(ds.tables):
        (root / f"modality_{m}.bin").write_bytes(np.ascontiguousarray(t, dtype="<f8").tobytes())
    (root / "labels.bin").write_bytes(ds.labels.astype("<u4").tobytes())
    (root / "presence.bin").write_bytes(ds.presence.astype(np.uint8).tobytes())


def _read_exact(path: Path, expected_bytes: int) -> bytes:
    raw = path.read_bytes()
    if len(raw) != expected_bytes:
        raise FormatError(
            f"{path.name}: expected {expected_bytes} bytes, file ends at byte {len(raw)}"
        )
    return raw


def load_dataset(path: str | Path) -> MultimodalDataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest.json: parse error at byte {e.pos}: {e.msg}") from e
    if manifest.get("version") != DATASET_VERSION:
        raise SchemaError(f"unsupported dataset version {manifest.get('version')!r}")
    try:
        m_count, n, c = int(manifest["M"]), int(manifest["N"]), int(manifest["C"])
        dims = [int(d) for d in manifest["modality_dims"]]
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"manifest.json missing or malformed field: {e}") from e
    if len(dims) != m_count:
        raise SchemaError(f"manifest declares M={m_count} but {len(dims)} modality dims")

    tables = []
    for m, d in enumerate(dims):
        raw = _read_exact(root / f"modality_{m}.bin", 8 * n * d)
        tables.append(np.frombuffer(raw, dtype="<f8").reshape(n, d).copy())
    labels = np.frombuffer(_read_exact(root / "labels.bin", 4 * n), dtype="<u4").astype(np.int64)
    presence_raw = np.frombuffer(_read_exact(root / "presence.bin", n * m_count), dtype=np.uint8)
    if not np.isin(presence_raw, (0, 1)).all():
        raise SchemaError("presence.bin contains values other than 0/1")
    presence = presence_raw.reshape(n, m_count).astype(bool)

    ds = MultimodalDataset(tuple(tables), labels, presence, c)
    validate_dataset(ds)
    return ds
