import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from altfuse import data
from altfuse.errors import ContractViolation, FormatError, SchemaError


def small_spec(seed=0, samples=200, noise=(0.0, 0.5)):
    return data.SyntheticSpec(
        latent_dim=4,
        class_count=3,
        samples=samples,
        modalities=tuple(data.ModalityGen(6, 1.0, n) for n in noise),
        seed=seed,
    )


@pytest.fixture(scope="module")
def small_ds():
    return data.generate_synthetic(small_spec())


# ---------------------------------------------------------------- generation


def test_generate_is_deterministic():
    a = data.generate_synthetic(small_spec(seed=9))
    b = data.generate_synthetic(small_spec(seed=9))
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.tables, b.tables))
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.presence.tobytes() == b.presence.tobytes()
    c = data.generate_synthetic(small_spec(seed=10))
    assert a.labels.tobytes() != c.labels.tobytes()


def test_generate_satisfies_invariants(small_ds):
    data.validate_dataset(small_ds)
    assert small_ds.modality_dims == (6, 6)
    assert small_ds.presence.all()


def test_class_frequencies_concentrate():
    spec = data.SyntheticSpec(
        latent_dim=8,
        class_count=4,
        samples=1000,
        modalities=(data.ModalityGen(16),),
        seed=5,
    )
    ds = data.generate_synthetic(spec)
    freqs = np.bincount(ds.labels, minlength=4) / 1000
    assert (freqs >= 0.15).all() and (freqs <= 0.35).all()


def test_noiseless_modality_is_linearly_separable():
    # independent oracle: a logistic probe must recover the labels from the
    # latent-recoverable modality when noise_std = 0
    from sklearn.linear_model import LogisticRegression

    spec = data.SyntheticSpec(
        latent_dim=8,
        class_count=4,
        samples=4000,
        modalities=(data.ModalityGen(16, 1.0, 0.0),),
        seed=11,
    )
    ds = data.generate_synthetic(spec)
    x, y = ds.tables[0], ds.labels
    probe = LogisticRegression(max_iter=2000, C=10.0).fit(x[:3000], y[:3000])
    assert probe.score(x[3000:], y[3000:]) >= 0.90


def test_spec_validation():
    with pytest.raises(ContractViolation):
        small_spec(samples=0)
    with pytest.raises(ContractViolation):
        data.SyntheticSpec(4, 1, 10, (data.ModalityGen(3),))
    with pytest.raises(ContractViolation):
        data.SyntheticSpec(4, 3, 10, (data.ModalityGen(3, 1.0, -0.1),))


# ------------------------------------------------------------------- masking


def test_mask_eta_zero_is_identity(small_ds):
    masked = data.apply_missing_mask(small_ds, 0.0, seed=3)
    assert masked.presence.all()
    assert masked.tables is small_ds.tables


def test_mask_accepts_reference_rate_grid(small_ds):
    for eta in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7):
        masked = data.apply_missing_mask(small_ds, eta, seed=1)
        data.validate_dataset(masked)


def test_mask_rejects_bad_eta(small_ds):
    for eta in (-0.1, 1.0, 1.5):
        with pytest.raises(ContractViolation):
            data.apply_missing_mask(small_ds, eta, seed=0)


def test_mask_absent_rate_matches_conditioned_law():
    # redraw-until-one-survives conditions the row law on "not all absent":
    # per-cell absent probability becomes (eta - eta^M) / (1 - eta^M)
    n, m, eta = 10_000, 3, 0.5
    spec = data.SyntheticSpec(
        latent_dim=2, class_count=2, samples=n,
        modalities=tuple(data.ModalityGen(2) for _ in range(m)), seed=2,
    )
    ds = data.apply_missing_mask(data.generate_synthetic(spec), eta, seed=6)
    p_absent = (eta - eta**m) / (1 - eta**m)
    sd = np.sqrt(n * p_absent * (1 - p_absent))
    absent_counts = n - ds.presence.sum(axis=0)
    assert np.abs(absent_counts - n * p_absent).max() <= 3 * sd


def test_mask_present_counts_within_three_sigma():
    n, m = 8000, 2
    spec = data.SyntheticSpec(
        latent_dim=2, class_count=2, samples=n,
        modalities=tuple(data.ModalityGen(2) for _ in range(m)), seed=4,
    )
    base = data.generate_synthetic(spec)
    for eta in (0.1, 0.3, 0.5, 0.7):
        ds = data.apply_missing_mask(base, eta, seed=8)
        p_present = 1 - (eta - eta**m) / (1 - eta**m)
        sd = np.sqrt(n * p_present * (1 - p_present))
        for mod in range(m):
            assert abs(ds.present_indices(mod).size - n * p_present) <= 3 * sd


@given(st.integers(0, 2**32), st.floats(0.0, 0.95), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_mask_never_empties_a_row_and_is_pure(seed, eta, m):
    spec = data.SyntheticSpec(
        latent_dim=2, class_count=2, samples=50,
        modalities=tuple(data.ModalityGen(2) for _ in range(m)), seed=1,
    )
    ds = data.generate_synthetic(spec)
    a = data.apply_missing_mask(ds, eta, seed)
    b = data.apply_missing_mask(ds, eta, seed)
    assert a.presence.any(axis=1).all()
    assert a.presence.tobytes() == b.presence.tobytes()


# -------------------------------------------------------------------- splits


def test_split_exact_sizes_and_partition():
    spec = small_spec(samples=100)
    ds = data.generate_synthetic(spec)
    tr, va, te = data.split(ds, data.SplitSpec(0.8, 0.1, 0.1, seed=2))
    assert (tr.sample_count, va.sample_count, te.sample_count) == (80, 10, 10)
    merged = np.sort(np.concatenate([p.labels for p in (tr, va, te)]))
    assert np.array_equal(merged, np.sort(ds.labels))


def test_split_deterministic(small_ds):
    a = data.split(small_ds, data.SplitSpec(seed=5))[0]
    b = data.split(small_ds, data.SplitSpec(seed=5))[0]
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.tables[0].tobytes() == b.tables[0].tobytes()


def test_split_rejects_empty_parts():
    ds = data.generate_synthetic(small_spec(samples=5))
    with pytest.raises(ContractViolation):
        data.split(ds, data.SplitSpec(0.98, 0.01, 0.01, seed=0))


def test_split_spec_validation():
    with pytest.raises(ContractViolation):
        data.SplitSpec(0.5, 0.5, 0.5)
    with pytest.raises(ContractViolation):
        data.SplitSpec(1.0, 0.0, 0.0)


# ------------------------------------------------------------------- batches


def test_minibatch_sizes():
    spec = small_spec(samples=10)
    ds = data.generate_synthetic(spec)
    batches = data.minibatches(ds, 0, 4, seed=0)
    assert [b.size for b in batches] == [4, 4, 2]
    single = data.minibatches(ds, 0, 64, seed=0)
    assert [b.size for b in single] == [10]


def test_minibatches_only_present_and_deterministic(small_ds):
    masked = data.apply_missing_mask(small_ds, 0.4, seed=9)
    a = data.minibatches(masked, 1, 16, seed=3)
    b = data.minibatches(masked, 1, 16, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    covered = np.concatenate(a)
    assert np.array_equal(np.sort(covered), masked.present_indices(1))
    assert data.minibatches(masked, 1, 16, seed=4)[0].tolist() != a[0].tolist()


def test_minibatches_empty_modality_signalled(small_ds):
    presence = small_ds.presence.copy()
    presence[:, 1] = False
    ds = data.MultimodalDataset(small_ds.tables, small_ds.labels, presence, small_ds.class_count)
    assert data.minibatches(ds, 1, 8, seed=0) == []


# ----------------------------------------------------------------------- I/O


def test_save_load_round_trip(tmp_path, small_ds):
    masked = data.apply_missing_mask(small_ds, 0.3, seed=1)
    data.save_dataset(masked, tmp_path / "ds")
    loaded = data.load_dataset(tmp_path / "ds")
    assert loaded.class_count == masked.class_count
    assert loaded.labels.tobytes() == masked.labels.tobytes()
    assert loaded.presence.tobytes() == masked.presence.tobytes()
    for a, b in zip(loaded.tables, masked.tables):
        assert a.tobytes() == b.tobytes()
    # second save must emit byte-identical files
    data.save_dataset(loaded, tmp_path / "ds2")
    for name in ("manifest.json", "modality_0.bin", "modality_1.bin", "labels.bin", "presence.bin"):
        assert (tmp_path / "ds" / name).read_bytes() == (tmp_path / "ds2" / name).read_bytes()


def test_load_truncated_file_is_parse_error(tmp_path, small_ds):
    data.save_dataset(small_ds, tmp_path / "ds")
    blob = (tmp_path / "ds" / "modality_0.bin").read_bytes()
    (tmp_path / "ds" / "modality_0.bin").write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="byte"):
        data.load_dataset(tmp_path / "ds")


def test_load_bad_manifest_names_byte_offset(tmp_path, small_ds):
    data.save_dataset(small_ds, tmp_path / "ds")
    (tmp_path / "ds" / "manifest.json").write_text('{"version": "mla-dataset/1", ???')
    with pytest.raises(FormatError, match="byte"):
        data.load_dataset(tmp_path / "ds")


def test_load_out_of_range_label_is_schema_error(tmp_path, small_ds):
    data.save_dataset(small_ds, tmp_path / "ds")
    labels = np.frombuffer((tmp_path / "ds" / "labels.bin").read_bytes(), dtype="<u4").copy()
    labels[0] = small_ds.class_count
    (tmp_path / "ds" / "labels.bin").write_bytes(labels.tobytes())
    with pytest.raises(SchemaError):
        data.load_dataset(tmp_path / "ds")


def test_load_wrong_version_rejected(tmp_path, small_ds):
    data.save_dataset(small_ds, tmp_path / "ds")
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    manifest["version"] = "mla-dataset/0"
    (tmp_path / "ds" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(SchemaError):
        data.load_dataset(tmp_path / "ds")
