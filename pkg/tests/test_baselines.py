import numpy as np
import pytest

from altfuse import altopt, baselines, data, fusion
from altfuse import model as mdl
from altfuse.errors import ContractViolation


def toy_dataset(samples=200, modalities=2, seed=1):
    spec = data.SyntheticSpec(
        latent_dim=4,
        class_count=3,
        samples=samples,
        modalities=tuple(data.ModalityGen(5, 1.0, 0.2) for _ in range(modalities)),
        seed=seed,
    )
    return data.generate_synthetic(spec)


def toy_config(**kw):
    base = dict(total_steps=4, batch_size=32, hidden=(8,), embed_dim=6, seed=2)
    base.update(kw)
    return altopt.TrainConfig(**base)


def named_concat_arrays(model):
    out = []
    for m, enc in enumerate(model.encoders):
        out.extend(mdl.encoder_arrays(enc))
    out.extend(mdl.head_arrays(model.head))
    return out


# -------------------------------------------------------------------- concat


def test_concat_deterministic():
    ds = toy_dataset()
    a = baselines.train_concat(toy_config(), ds)
    b = baselines.train_concat(toy_config(), ds)
    for x, y in zip(named_concat_arrays(a), named_concat_arrays(b)):
        assert x.tobytes() == y.tobytes()


def test_concat_single_modality_probe_equals_fused():
    ds = toy_dataset(modalities=1)
    model = baselines.train_concat(toy_config(), ds)
    probe = baselines.unimodal_probe(model, 0, ds)
    fused = np.argmax(baselines.concat_logits(model, [ds.tables[0]]), axis=1)
    assert probe == np.mean(fused == ds.labels)


def test_concat_inference_is_single_linear_head_on_stacked_features():
    ds = toy_dataset()
    model = baselines.train_concat(toy_config(), ds)
    stacked = np.hstack(
        [
            baselines._forward_encoder(enc, ds.tables[m])[-1]
            for m, enc in enumerate(model.encoders)
        ]
    )
    reference = mdl.head_logits(model.head, stacked)
    got = baselines.concat_logits(model, list(ds.tables))
    assert np.abs(got - reference).max() == 0.0


def test_concat_trains_on_paired_subset_only():
    ds = toy_dataset()
    presence = ds.presence.copy()
    presence[:, 1] = False
    unpaired = data.MultimodalDataset(ds.tables, ds.labels, presence, ds.class_count)
    with pytest.raises(ContractViolation):
        baselines.train_concat(toy_config(), unpaired)


def test_concat_probe_zeroes_other_blocks():
    ds = toy_dataset()
    model = baselines.train_concat(toy_config(), ds)
    s = model.dims.embed_dim
    feats0 = baselines._forward_encoder(model.encoders[0], ds.tables[0])[-1]
    zeroed = np.hstack([feats0, np.zeros_like(feats0)])
    expected = np.argmax(mdl.head_logits(model.head, zeroed), axis=1)
    assert baselines.unimodal_probe(model, 0, ds) == np.mean(expected == ds.labels)


# --------------------------------------------------------------- late fusion


def test_late_fusion_deterministic_and_single_modality_case():
    ds = toy_dataset(modalities=1)
    a = baselines.train_late_fusion(toy_config(), ds)
    b = baselines.train_late_fusion(toy_config(), ds)
    assert a.heads[0].weight.tobytes() == b.heads[0].weight.tobytes()
    probe = baselines.unimodal_probe(a, 0, ds)
    fused = np.argmax(baselines.late_branch_logits(a, 0, ds.tables[0]), axis=1)
    assert probe == np.mean(fused == ds.labels)


def test_late_fusion_branch_invariant_to_other_modality(tmp_path):
    ds = toy_dataset()
    corrupted_tables = (ds.tables[0], np.full_like(ds.tables[1], 1e3))
    corrupted = data.MultimodalDataset(corrupted_tables, ds.labels, ds.presence, ds.class_count)
    a = baselines.train_late_fusion(toy_config(), ds)
    b = baselines.train_late_fusion(toy_config(), corrupted)
    for x, y in zip(mdl.encoder_arrays(a.encoders[0]), mdl.encoder_arrays(b.encoders[0])):
        assert x.tobytes() == y.tobytes()
    assert a.heads[0].weight.tobytes() == b.heads[0].weight.tobytes()
    assert baselines.unimodal_probe(a, 0, ds) == baselines.unimodal_probe(b, 0, ds)


def test_late_fusion_identical_branches_average_to_branch_logits():
    ds = toy_dataset()
    model = baselines.train_late_fusion(toy_config(), ds)
    clone = baselines.LateFusionModel(
        [model.encoders[0], model.encoders[0]],
        [model.heads[0], model.heads[0]],
        model.dims,
        [True, True],
    )
    same_tables = data.MultimodalDataset(
        (ds.tables[0], ds.tables[0]), ds.labels, ds.presence, ds.class_count
    )
    branch = baselines.late_branch_logits(clone, 0, ds.tables[0])
    from altfuse.evaluation import _fused_predictions_late

    fused = _fused_predictions_late(clone, same_tables)
    assert np.array_equal(fused, np.argmax(branch, axis=1))


def test_late_fusion_skips_empty_modality():
    ds = toy_dataset()
    presence = ds.presence.copy()
    presence[:, 1] = False
    lopsided = data.MultimodalDataset(ds.tables, ds.labels, presence, ds.class_count)
    model = baselines.train_late_fusion(toy_config(), lopsided)
    assert model.trained == [True, False]
    assert baselines.unimodal_probe(model, 1, ds) is None


# -------------------------------------------------------------------- probes


def test_probe_of_alternating_model_matches_restricted_predict():
    ds = toy_dataset()
    params, _ = altopt.train(toy_config(), ds)
    m = 1
    idx = ds.present_indices(m)
    wanted = []
    for i in idx:
        res = fusion.predict(params, [t[i] for t in ds.tables], [False, True])
        wanted.append(res.predicted_class)
    probe = baselines.unimodal_probe(params, m, ds)
    assert probe == np.mean(np.array(wanted) == ds.labels[idx])


def test_probe_with_no_present_samples_is_signalled():
    ds = toy_dataset()
    presence = ds.presence.copy()
    presence[:, 0] = False
    masked = data.MultimodalDataset(ds.tables, ds.labels, presence, ds.class_count)
    params, _ = altopt.train(toy_config(), masked)
    assert baselines.unimodal_probe(params, 0, masked) is None


# --------------------------------------------------------------- checkpoints


def test_concat_checkpoint_round_trip(tmp_path):
    ds = toy_dataset()
    model = baselines.train_concat(toy_config(), ds)
    baselines.save_concat_checkpoint(model, tmp_path / "ckpt")
    loaded, manifest = baselines.load_model(tmp_path / "ckpt")
    assert manifest["kind"] == "concat"
    assert isinstance(loaded, baselines.ConcatModel)
    for x, y in zip(named_concat_arrays(model), named_concat_arrays(loaded)):
        assert x.tobytes() == y.tobytes()


def test_late_checkpoint_round_trip(tmp_path):
    ds = toy_dataset()
    model = baselines.train_late_fusion(toy_config(), ds)
    baselines.save_late_checkpoint(model, tmp_path / "ckpt")
    loaded, manifest = baselines.load_model(tmp_path / "ckpt")
    assert manifest["kind"] == "late"
    assert isinstance(loaded, baselines.LateFusionModel)
    for m in range(2):
        assert loaded.heads[m].weight.tobytes() == model.heads[m].weight.tobytes()
        for x, y in zip(
            mdl.encoder_arrays(model.encoders[m]), mdl.encoder_arrays(loaded.encoders[m])
        ):
            assert x.tobytes() == y.tobytes()


def test_load_model_dispatches_mla(tmp_path):
    ds = toy_dataset()
    params, _ = altopt.train(toy_config(total_steps=1), ds)
    mdl.save_checkpoint(params, tmp_path / "ckpt", step=1)
    loaded, manifest = baselines.load_model(tmp_path / "ckpt")
    assert manifest["kind"] == "mla"
    assert isinstance(loaded, mdl.ModelParams)
