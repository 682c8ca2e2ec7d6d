import logging

import numpy as np
import pytest

from metricdae.data import (LabeledDataset, SchemaError, SyntheticConfig, class_id,
                            export_embeddings, generate_synthetic, load_csv, load_embeddings,
                            load_manifest, load_manifest_datasets, write_csv)
from metricdae.evaluate import balanced_accuracy, ols_label_analysis, svc_train

HEADER = ",".join(f"feat_{j}" for j in range(88))


def write_rows(path, header, rows):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def feature_row(v=0.5):
    return ",".join([str(v)] * 88)


def test_load_two_rows(tmp_path):
    p = write_rows(tmp_path / "a.csv", HEADER + ",class,activation,valence",
                   [feature_row(0.1) + ",N,0.2,0.3", feature_row(-1) + ",angry,0.9,-0.4"])
    ds = load_csv(p)
    assert ds.features.shape == (2, 88)
    assert ds.class_ids.tolist() == [0, 3]
    np.testing.assert_array_equal(ds.activation, [0.2, 0.9])
    np.testing.assert_array_equal(ds.valence, [0.3, -0.4])
    assert ds.name == "a"


def test_missing_feature_column_named(tmp_path):
    header = ",".join(f"feat_{j}" for j in range(87)) + ",class"
    p = write_rows(tmp_path / "b.csv", header, [",".join(["0"] * 87) + ",N"])
    with pytest.raises(SchemaError, match="feat_87"):
        load_csv(p)


def test_activation_only_file(tmp_path):
    p = write_rows(tmp_path / "c.csv", HEADER + ",class,activation",
                   [feature_row() + ",S,0.1", feature_row() + ",H,0.5"])
    ds = load_csv(p)
    assert ds.valence is None and ds.label("valence") is None
    assert ds.activation is not None


def test_all_na_column_means_absent(tmp_path):
    p = write_rows(tmp_path / "d.csv", HEADER + ",class,activation,valence",
                   [feature_row() + ",S,0.1,NA", feature_row() + ",H,0.5,NA"])
    assert load_csv(p).valence is None


def test_unknown_class_reported_with_line(tmp_path):
    p = write_rows(tmp_path / "e.csv", HEADER + ",class",
                   [feature_row() + ",N", feature_row() + ",bored"])
    with pytest.raises(SchemaError, match="line 3.*bored"):
        load_csv(p)


def test_non_numeric_feature(tmp_path):
    row = feature_row().split(",")
    row[5] = "x"
    p = write_rows(tmp_path / "f.csv", HEADER + ",class", [",".join(row) + ",N"])
    with pytest.raises(SchemaError, match="feat_5"):
        load_csv(p)


def test_extra_column_warns(tmp_path, caplog):
    p = write_rows(tmp_path / "g.csv", HEADER + ",class,speaker",
                   [feature_row() + ",N,spk1", feature_row() + ",A,spk2"])
    with caplog.at_level(logging.WARNING):
        ds = load_csv(p)
    assert "speaker" in caplog.text
    assert ds.n == 2


@pytest.mark.parametrize("token, cid", [("N", 0), ("neutral", 0), ("Sad", 1), ("hap", 2),
                                        ("excited", 2), ("A", 3), (" anger ", 3)])
def test_class_synonyms(token, cid):
    assert class_id(token) == cid


def test_export_embeddings_na_sentinel(tmp_path):
    ds = LabeledDataset("x", np.zeros((3, 88)), [0, 1, 3], activation=[0.1, 0.2, 0.3])
    p = tmp_path / "emb.csv"
    export_embeddings(np.arange(6.0).reshape(3, 2), ds, p)
    lines = p.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "z1,z2,class,activation,valence"
    assert lines[1] == "0,1,N,0.10000000000000001,NA"
    assert lines[3].split(",")[2] == "A"


def test_export_round_trip_exact(tmp_path, rng):
    ds = generate_synthetic(40, seed=1)
    z = rng.normal(size=(40, 2))
    p = tmp_path / "emb.csv"
    export_embeddings(z, ds, p)
    back = load_embeddings(p)
    assert back["z"].tobytes() == z.tobytes()
    assert back["activation"].tobytes() == ds.activation.tobytes()
    np.testing.assert_array_equal(back["class_ids"], ds.class_ids)


def test_export_shape_checked(tmp_path):
    ds = LabeledDataset("x", np.zeros((3, 88)), [0, 1, 3])
    with pytest.raises(ValueError):
        export_embeddings(np.zeros((3, 3)), ds, tmp_path / "e.csv")


def test_feature_csv_round_trip(tmp_path):
    ds = generate_synthetic(30, seed=2)
    p = tmp_path / "s.csv"
    write_csv(ds, p)
    back = load_csv(p)
    assert back.features.tobytes() == ds.features.tobytes()
    assert back.valence.tobytes() == ds.valence.tobytes()


def test_synthetic_deterministic():
    a, b = generate_synthetic(100, seed=5), generate_synthetic(100, seed=5)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.activation.tobytes() == b.activation.tobytes()
    assert generate_synthetic(100, seed=6).features.tobytes() != a.features.tobytes()


def test_synthetic_noise_free_labels_are_linear():
    cfg = SyntheticConfig(activation_noise=0.0)
    ds = generate_synthetic(200, seed=0, config=cfg)
    assert ols_label_analysis(ds.latent, ds.activation).r2 == pytest.approx(1.0, abs=1e-12)


def test_synthetic_classes_separable_in_latent():
    ds = generate_synthetic(600, seed=3)
    m = svc_train(ds.latent, ds.class_ids)
    assert balanced_accuracy(ds.class_ids, m.predict(ds.latent)) >= 0.95


def test_synthetic_label_switches():
    ds = generate_synthetic(20, config=SyntheticConfig(include_valence=False))
    assert ds.valence is None and ds.activation is not None


def test_dataset_label_length_checked():
    with pytest.raises(ValueError):
        LabeledDataset("x", np.zeros((3, 2)), [0, 1, 2], activation=[0.1, 0.2])


def test_manifest_loading(tmp_path):
    write_csv(generate_synthetic(20, seed=0), tmp_path / "tr.csv")
    write_csv(generate_synthetic(20, seed=1, config=SyntheticConfig(include_valence=False)),
              tmp_path / "tx.csv")
    (tmp_path / "m.toml").write_text(
        'seed = 7\nfolds = 3\n'
        '[[datasets]]\nname = "src"\npath = "tr.csv"\nrole = "train"\nlabels = ["activation", "valence"]\n'
        '[[datasets]]\nname = "tgt"\npath = "tx.csv"\nrole = "transfer"\n')
    m = load_manifest(tmp_path / "m.toml")
    assert (m.seed, m.folds) == (7, 3)
    assert m.train.name == "src" and [t.name for t in m.transfer] == ["tgt"]
    ds = load_manifest_datasets(m)
    assert [d.role for d in ds] == ["train", "transfer"]
    assert ds[1].valence is None


def test_manifest_declared_label_must_exist(tmp_path):
    write_csv(generate_synthetic(20, config=SyntheticConfig(include_valence=False)), tmp_path / "tr.csv")
    (tmp_path / "m.toml").write_text(
        '[[datasets]]\nname = "src"\npath = "tr.csv"\nrole = "train"\nlabels = ["valence"]\n')
    with pytest.raises(SchemaError, match="valence"):
        load_manifest_datasets(load_manifest(tmp_path / "m.toml"))


def test_manifest_needs_one_train(tmp_path):
    (tmp_path / "m.toml").write_text('[[datasets]]\nname = "a"\npath = "a.csv"\nrole = "transfer"\n')
    with pytest.raises(ValueError, match="train"):
        load_manifest(tmp_path / "m.toml")
